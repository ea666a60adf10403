#pragma once

#include "harmony/data.hpp"
#include "harmony/monte_carlo.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace harmony {

/// Long format: scenario, estimator, subgroup, metric, value, mc_se. Subgroup is the
/// label, or "all" for run-level counts.
void write_report_csv(const MonteCarloReport& report, const std::filesystem::path& path);

nlohmann::json report_json(const MonteCarloReport& report);

/// One row per (replicate used, estimator, subgroup).
void write_replicates_csv(const MonteCarloReport& report, const std::filesystem::path& path);

/// Output of the estimate command on one dataset.
struct EstimateResult {
    std::vector<std::string> subgroup_labels;
    Eigen::VectorXd pi;
    double overall = 0.0;  // RCT-only overall effect used as the anchor
    std::vector<std::string> names;
    ReplicateEstimates values;
    /// Largest |pi^T theta - overall| across FULL harmonised estimators, if any.
    std::optional<double> full_constraint_gap;
};

EstimateResult run_estimate(const CombinedDataset& ds, const MonteCarloOptions& options);

void write_estimates_csv(const EstimateResult& result, const std::filesystem::path& path);
void write_intervals_csv(const EstimateResult& result, const std::filesystem::path& path);
/// Per-subgroup cell counts, prevalence and EC share.
void write_design_csv(const CombinedDataset& ds, const Eigen::VectorXd& pi, const std::filesystem::path& path);

}  // namespace harmony
