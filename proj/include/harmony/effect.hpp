#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace harmony {

enum class EstimatorMethod {
    DiffMeans,
    Ols,
    LogisticMarginal,
    IpwLogistic,
    Oracle,
    External,
    Harmonized,
};

std::string_view to_string(EstimatorMethod method) noexcept;

/// Subgroup effect vector and/or overall effect with optional covariances.
struct EffectEstimate {
    Eigen::VectorXd theta;                     // length K; empty for overall-only estimates
    std::optional<double> theta_overall;
    std::optional<Eigen::MatrixXd> covariance;  // K x K
    std::optional<double> overall_variance;
    EstimatorMethod method = EstimatorMethod::External;
    bool uses_ec = false;

    Eigen::Index K() const { return theta.size(); }

    /// Wraps a third-party subgroup estimate for harmonization.
    static EffectEstimate external(Eigen::VectorXd theta,
                                   std::optional<Eigen::MatrixXd> covariance = std::nullopt,
                                   bool uses_ec = true);
    static EffectEstimate external_overall(double theta, std::optional<double> variance = std::nullopt);
};

}  // namespace harmony
