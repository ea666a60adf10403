#pragma once

#include "harmony/data.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace harmony {

/// What a design column estimates.
struct ColumnRole {
    enum class Kind {
        Intercept,          // overall mu
        Treatment,          // overall theta
        SubgroupIntercept,  // mu_k / nu_k
        SubgroupTreatment,  // theta_k / eta_k
        Covariate,          // beta_j
        EcBias,             // gamma_k / delta_k
    };
    Kind kind;
    std::size_t index = 0;
};

struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<ColumnRole> roles;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

enum class DesignModel {
    OverallRct,              // M_0 = [1, T, X] on RCT rows
    PooledSubgroup,          // M_1 = [subgroup one-hot, one-hot x T, X], RCT rows then EC rows
    PooledSubgroupWithBias,  // [M_1, M_2], M_2 = EC membership x subgroup one-hot
};

DesignMatrix build_design(const CombinedDataset& ds, DesignModel model);

/// M_2 alone (n^(r+e) x K).
Eigen::MatrixXd ec_bias_block(const CombinedDataset& ds);

/// Outcomes stacked in design row order (RCT rows then EC rows, or RCT only).
Eigen::VectorXd stacked_outcomes(const CombinedDataset& ds, DesignModel model);

struct GlmFit {
    Eigen::VectorXd coefficients;
    /// Logistic: X^T diag(w g'(Xb)) X. OLS: X^T W X (divide by dispersion for the information).
    Eigen::MatrixXd information;
    /// OLS residual variance RSS / (n - p); zero for logistic fits.
    double dispersion = 0.0;
    bool converged = false;
    int iterations = 0;

    /// Model-based covariance: dispersion * (X^T W X)^{-1} for OLS, information^{-1} for logistic.
    Eigen::MatrixXd covariance() const;
    bool is_ols = false;
};

GlmFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const std::optional<Eigen::VectorXd>& weights = std::nullopt);
inline GlmFit fit_ols(const DesignMatrix& design, const Eigen::VectorXd& y,
                      const std::optional<Eigen::VectorXd>& weights = std::nullopt) {
    return fit_ols(design.values, y, weights);
}

struct IrlsOptions {
    double tol = 1e-10;          // on the score infinity-norm
    int max_iter = 100;
    int max_halvings = 20;
    double coefficient_cap = 30.0;  // logit scale; larger coefficients signal separation
};

/// Weighted logistic regression. `y` must be binary.
GlmFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights, const IrlsOptions& options = {});
inline GlmFit fit_logistic_irls(const DesignMatrix& design, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& weights,
                                const IrlsOptions& options = {}) {
    return fit_logistic_irls(design.values, y, weights, options);
}

/// Same solver for responses in [0, 1], i.e. maximising an expected log-likelihood.
/// `start` seeds Newton's method (zeros when absent).
GlmFit fit_logistic_expected(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_mean,
                             const Eigen::VectorXd& weights, const IrlsOptions& options = {},
                             const std::optional<Eigen::VectorXd>& start = std::nullopt,
                             std::vector<double>* loglik_trace = nullptr);

/// Weighted Bernoulli log-likelihood (y may be fractional).
double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights, const Eigen::VectorXd& beta);

inline double expit(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double expit_derivative(double x) {
    const double p = expit(x);
    return p * (1.0 - p);
}

}  // namespace harmony
