#pragma once

#include "harmony/effect.hpp"
#include "harmony/error.hpp"
#include "harmony/harmonize.hpp"
#include "harmony/intervals.hpp"
#include "harmony/scenario.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace harmony {

/// Working model feeding harmonisation.
enum class PipelineKind {
    DiffMeans,  // difference of means, normal outcomes without covariates
    Linear,     // OLS on M_1 with covariates
    Logistic,   // pooled logistic marginal effects
};
std::string_view to_string(PipelineKind kind) noexcept;

/// Source of the RCT-only overall effect.
enum class OverallSource { DiffMeans, Model };

struct MonteCarloOptions {
    PipelineKind pipeline = PipelineKind::DiffMeans;
    std::vector<Lambda> lambdas{Lambda::full()};
    std::vector<SigmaMode> sigma_modes{SigmaMode::BiasDirected};
    OverallSource overall = OverallSource::DiffMeans;
    bool pooled = true;
    bool rct_only = true;
    /// Harmonised versions of the pooled estimate, one per (sigma mode, lambda).
    bool harmonized = true;
    bool oracle = false;
    bool cut = false;
    bool ipw = false;
    /// Prior variance of both analysts' normal priors; zero selects flat priors.
    double cut_prior_variance = 1e4;
    std::vector<IntervalMethod> intervals;
    std::size_t bootstrap_reps = 500;
    double alpha = 0.05;
    std::size_t reps = 2000;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    /// Prevalences for harmonisation; defaults to the scenario's, then to the RCT empirical ones.
    std::optional<Eigen::VectorXd> pi;

    /// Throws ConfigError for unsupported combinations.
    void validate() const;
};

struct SubgroupMetrics {
    double bias = 0, bias_se = 0;
    double sd = 0, sd_se = 0;  // n denominator, so rmse^2 = bias^2 + sd^2
    double rmse = 0, rmse_se = 0;
};

struct EstimatorReport {
    std::string name;
    std::vector<SubgroupMetrics> metrics;  // per subgroup
    Eigen::MatrixXd estimates;             // replicates used x K
};

struct IntervalReport {
    std::string estimator;
    IntervalMethod method = IntervalMethod::Analytic;
    Eigen::VectorXd coverage, coverage_se;
    Eigen::VectorXd width, width_se;
};

struct FailureRecord {
    std::size_t replicate = 0;
    ErrorCode code = ErrorCode::NotConverged;
    std::string message;
};

struct MonteCarloReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t reps_requested = 0;
    std::vector<std::size_t> replicates_used;
    std::vector<FailureRecord> failures;
    Eigen::VectorXd truth;
    std::vector<std::string> subgroup_labels;
    std::vector<EstimatorReport> estimators;
    std::vector<IntervalReport> intervals;
    /// Free-form facts about the run (e.g. how pi was chosen).
    std::vector<std::pair<std::string, std::string>> notes;

    const EstimatorReport& estimator(const std::string& name) const;
    const IntervalReport& interval(const std::string& estimator, IntervalMethod method) const;
};

/// Estimate rows produced for one dataset, in the order of `names`.
struct ReplicateEstimates {
    std::vector<Eigen::VectorXd> estimates;
    std::vector<std::pair<std::string, IntervalSet>> intervals;  // (estimator, interval)
};

/// The RCT-only overall effect selected by `options.overall`.
EffectEstimate overall_effect(const CombinedDataset& ds, const MonteCarloOptions& options);

/// Names of the estimators `options` produces, in output order.
std::vector<std::string> estimator_names(const MonteCarloOptions& options);

/// Runs every configured estimator on one dataset. `mu_true` feeds the oracle.
ReplicateEstimates run_estimators(const CombinedDataset& ds, const MonteCarloOptions& options,
                                  const std::optional<Eigen::VectorXd>& pi,
                                  const std::optional<Eigen::VectorXd>& mu_true,
                                  std::uint64_t bootstrap_seed);

/// Bias, SD, RMSE, coverage and width with Monte-Carlo standard errors. Replicates with a
/// data or numerical error are excluded and listed in `failures`; configuration errors
/// propagate as ReplicateError. Results do not depend on `options.workers`.
MonteCarloReport run_monte_carlo(const ScenarioSpec& spec, const MonteCarloOptions& options);

/// Aggregates per-replicate outputs (nullopt for failures) into a report.
MonteCarloReport summarize(const std::vector<std::string>& names,
                           const std::vector<std::optional<ReplicateEstimates>>& results,
                           const std::vector<FailureRecord>& failures, const Eigen::VectorXd& truth);

}  // namespace harmony
