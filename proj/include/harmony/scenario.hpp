#pragma once

#include "harmony/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

namespace harmony {

enum class CovariateMode {
    PerReplicate,  // fresh covariates in every replicate
    Fixed,         // one draw shared by all replicates
};

/// Independent normal covariates, with study-specific means and standard deviations.
struct CovariateSpec {
    std::size_t d = 0;
    Eigen::VectorXd rct_mean, rct_sd;
    Eigen::VectorXd ec_mean, ec_sd;
    CovariateMode mode = CovariateMode::PerReplicate;
};

/// Data-generating model. Continuous outcomes: Y = mu_k + theta_k T + beta^T X (+ gamma_k
/// for EC) + N(0, phi2). Binary outcomes: logit P(Y = 1) = mu_k + theta_k T + beta^T X
/// (+ distortion_k for EC), so mu and theta play the roles of nu and eta.
struct ScenarioSpec {
    std::string name;
    OutcomeFamily family = OutcomeFamily::Continuous;
    std::size_t K = 0;
    Eigen::MatrixXi n_rct;  // K x 2, column t = arm
    Eigen::VectorXi n_ec;   // K
    Eigen::VectorXd mu;
    Eigen::VectorXd theta;
    Eigen::VectorXd distortion;  // gamma (continuous) or delta (binary)
    double phi2 = 1.0;
    CovariateSpec covariates;
    Eigen::VectorXd beta;   // d
    std::optional<Eigen::VectorXd> pi;

    /// Throws InvalidSpec.
    void validate() const;
    /// Treated share of the RCT.
    double randomization_ratio() const;
};

/// Marginal subgroup effects under the RCT covariate distribution. For binary outcomes,
/// E[g(mu + theta + beta^T X) - g(mu + beta^T X)] by 64-point Gauss-Hermite quadrature.
Eigen::VectorXd true_effects(const ScenarioSpec& spec);

/// Control-arm means (continuous, no covariates) used by the oracle estimator.
Eigen::VectorXd true_control_means(const ScenarioSpec& spec);

/// One replicate with exactly the specified cell counts. Streams are keyed by
/// (seed, replicate, role), so any replicate can be generated on its own.
CombinedDataset generate_scenario(const ScenarioSpec& spec, std::uint64_t seed, std::uint32_t replicate);

/// Gauss-Hermite nodes and weights for the weight exp(-x^2), by Golub-Welsch.
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

}  // namespace harmony
