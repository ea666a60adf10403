#pragma once

#include "harmony/data.hpp"
#include "harmony/glm.hpp"
#include "harmony/harmonize.hpp"

#include <Eigen/Dense>

#include <optional>

namespace harmony {

/// Asymptotic value of the (weighted) pooled logistic estimator as a function of the
/// EC logit distortion delta, holding the empirical (W, X) distributions fixed.
///
/// Each RCT patient contributes four expected-likelihood terms (both arms, weighted by
/// the empirical assignment proportions, and both outcomes) and each EC patient two,
/// with outcome probabilities from the anchor fit (nu, eta, beta) shifted by delta on
/// the EC rows.
struct LimitMapSpec {
    CombinedDataset design;     // outcomes unused
    Eigen::VectorXd anchor;     // (nu_{1:K}, eta_{1:K}, beta) from the RCT-only fit
    Eigen::VectorXd ec_weights; // one per EC record
    double p_treated = 0.5;     // empirical RCT assignment proportion

    // Augmented rows: RCT control copies, RCT treated copies, then EC rows.
    Eigen::MatrixXd X;
    Eigen::VectorXd w;
    Eigen::VectorXd y_rct;      // fixed responses of the 2 n^(r) RCT copies
    Eigen::VectorXd ec_base_lp; // anchor linear predictor of each EC row
    IrlsOptions irls;

    std::size_t K() const { return design.K; }
    double mixing_fraction() const;
};

/// Fits the RCT-only anchor (unless given) and caches the augmented design.
LimitMapSpec make_limit_map(const CombinedDataset& ds,
                            const std::optional<Eigen::VectorXd>& ec_weights = std::nullopt,
                            const std::optional<Eigen::VectorXd>& anchor = std::nullopt);

/// theta at the anchor parameters (the delta = 0 value).
Eigen::VectorXd anchor_theta(const LimitMapSpec& spec);

/// theta-circle(delta). `coefficients_out` receives the maximiser when non-null.
Eigen::VectorXd limit_map_theta(const LimitMapSpec& spec, const Eigen::VectorXd& delta,
                                Eigen::VectorXd* coefficients_out = nullptr);

/// Central-difference Jacobian of the limit map at delta = 0.
Eigen::MatrixXd limit_map_jacobian(const LimitMapSpec& spec, double fd_step = 1e-4);

/// Implicit-function-theorem Jacobian at delta = 0: G H^{-1} X_e^T diag(w g') S.
Eigen::MatrixXd limit_map_jacobian_factorized(const LimitMapSpec& spec);

/// BD direction for the logistic working model from the finite-difference Jacobian.
BiasModel bd_direction_glm(const LimitMapSpec& spec, const Eigen::VectorXd& pi, double fd_step = 1e-4);

}  // namespace harmony
