#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace harmony {

enum class Study { Rct, Ec };
enum class OutcomeFamily { Continuous, Binary };

/// One patient row. `subgroup` is a 0-based index into CombinedDataset::subgroup_labels.
struct SubjectRecord {
    double outcome = 0.0;
    int treatment = 0;
    std::size_t subgroup = 0;
    Eigen::VectorXd covariates;
    Study study = Study::Rct;
    double weight = 1.0;
};

/// Validated RCT + external-control collections.
///
/// Invariants checked by validate(): EC rows are untreated, subgroup indices are
/// below K, every covariate vector has length d, weights are non-negative, and
/// binary outcomes are 0/1. Per-subgroup arm coverage is checked by estimators.
struct CombinedDataset {
    std::vector<SubjectRecord> rct;
    std::vector<SubjectRecord> ec;
    std::size_t K = 0;
    std::size_t d = 0;
    OutcomeFamily family = OutcomeFamily::Continuous;
    std::vector<std::string> subgroup_labels;

    void validate() const;

    std::size_t n_rct() const { return rct.size(); }
    std::size_t n_ec() const { return ec.size(); }

    /// Same RCT rows, no external controls.
    CombinedDataset rct_only() const;
};

/// Column mapping for CSV ingestion.
struct CsvSchema {
    std::string outcome = "outcome";
    std::string treatment = "treatment";
    std::string subgroup = "subgroup";
    std::vector<std::string> covariates;
    std::optional<std::string> weight;
    OutcomeFamily family = OutcomeFamily::Continuous;
    /// When set, fixes K and the label order; labels outside the list are rejected.
    /// Otherwise labels from both files are collected and sorted lexicographically.
    std::optional<std::vector<std::string>> subgroup_labels;
    /// An absent treatment column is allowed for EC files (treatment = 0).
    bool ec_requires_treatment = false;
};

CombinedDataset load_dataset(const std::filesystem::path& rct_csv,
                             const std::filesystem::path& ec_csv,
                             const CsvSchema& schema);

/// Writes the dataset back with the schema's column names; reals use shortest
/// round-trip formatting.
void write_dataset(const CombinedDataset& ds,
                   const std::filesystem::path& rct_csv,
                   const std::filesystem::path& ec_csv,
                   const CsvSchema& schema);

enum class PrevalenceSource { RctEmpirical, UserSupplied };

/// Cell counts n_{k,t}^{(s)} and derived design ratios.
struct DesignCounts {
    Eigen::MatrixXd n_rct;   // K x 2, column t = arm
    Eigen::VectorXd n_ec;    // K, all EC patients are controls
    Eigen::VectorXd pi;      // prevalences, strictly positive, sums to one
    Eigen::VectorXd Q;       // diagonal of Q: n_ec_k / (n_rct_k0 + n_ec_k)
    double q_bar = 0.0;      // sum_k pi_k Q_kk
    double q = 0.0;          // n^(e) / (n^(r)_{.,0} + n^(e))
    PrevalenceSource source = PrevalenceSource::RctEmpirical;

    std::size_t K() const { return static_cast<std::size_t>(pi.size()); }
    double n_rct_arm(int t) const { return n_rct.col(t).sum(); }
    double n_ec_total() const { return n_ec.sum(); }
    Eigen::MatrixXd Pi() const { return pi.asDiagonal(); }
};

DesignCounts compute_design_counts(const CombinedDataset& ds,
                                   const std::optional<Eigen::VectorXd>& user_pi = std::nullopt);

/// RCT empirical subgroup frequencies.
Eigen::VectorXd empirical_prevalence(const CombinedDataset& ds);

}  // namespace harmony
