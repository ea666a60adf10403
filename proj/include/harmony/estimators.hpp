#pragma once

#include "harmony/data.hpp"
#include "harmony/effect.hpp"
#include "harmony/glm.hpp"

#include <Eigen/Dense>

#include <optional>

namespace harmony {

/// Ybar_{.,1} - Ybar_{.,0} on RCT rows. Carries the unequal-variance overall variance
/// when both arms have at least two patients.
EffectEstimate diff_means_overall(const CombinedDataset& ds);

/// Ybar_{k,1} - Ybar^{(r+e)}_{k,0}: EC patients are merged into the control arm.
EffectEstimate diff_means_pooled_subgroups(const CombinedDataset& ds);

enum class RctModel { DiffMeans, Ols, Logistic };

/// Subgroup effects from RCT rows only.
EffectEstimate rct_only_subgroups(const CombinedDataset& ds, RctModel model);

/// Ybar_{k,1} - mu_k with the true control means.
EffectEstimate oracle_subgroups(const CombinedDataset& ds, const Eigen::VectorXd& mu_true);

/// theta block of the OLS fit on M_1 (RCT and EC rows).
EffectEstimate ols_subgroup_effects(const CombinedDataset& ds);
/// theta from the OLS fit of M_0 on RCT rows.
EffectEstimate ols_overall_effect(const CombinedDataset& ds);

/// Estimators that are linear in the outcomes: theta = A y, with y stacked RCT then EC.
/// Joint covariance phi2 * A A^T of (subgroup block, overall) for harmonization.
struct LinearPair {
    Eigen::MatrixXd subgroup_weights;  // K x n^{(r+e)}
    Eigen::RowVectorXd overall_weights;  // 1 x n^{(r+e)}, zero on EC rows
};

/// Outcome weights for (diff_means_pooled_subgroups, diff_means_overall).
LinearPair diff_means_weights(const CombinedDataset& ds);
/// Outcome weights for (ols_subgroup_effects, ols_overall_effect).
LinearPair ols_weights(const CombinedDataset& ds);

/// (K+1) x (K+1) covariance of [subgroup block; overall] under homoscedastic noise phi2.
Eigen::MatrixXd joint_covariance(const LinearPair& weights, double phi2);

/// Residual variance pooled over RCT (subgroup, arm) cells and EC subgroup cells.
double pooled_cell_variance(const CombinedDataset& ds);

/// g-difference averaged over RCT rows of subgroup k, for coefficients laid out as M_1
/// (nu_{1:K}, eta_{1:K}, beta).
Eigen::VectorXd marginal_effects(const CombinedDataset& ds, const Eigen::VectorXd& coefficients);
/// Jacobian of marginal_effects with respect to the coefficients (K x (2K + d)).
Eigen::MatrixXd marginal_effects_gradient(const CombinedDataset& ds,
                                          const Eigen::VectorXd& coefficients);

struct LogisticEffects {
    EffectEstimate estimate;
    GlmFit fit;
};

/// Pooled logistic working model on M_1 with optional per-row weights (design row order).
/// Covariance by the delta method from the inverse Fisher information.
LogisticEffects logistic_marginal_fit(const CombinedDataset& ds,
                                      const std::optional<Eigen::VectorXd>& row_weights = std::nullopt);
inline EffectEstimate logistic_marginal_effects(
    const CombinedDataset& ds, const std::optional<Eigen::VectorXd>& row_weights = std::nullopt) {
    return logistic_marginal_fit(ds, row_weights).estimate;
}

/// RCT-only logistic fit of M_0, reported as the marginal g-difference over RCT rows.
EffectEstimate logistic_overall_rct(const CombinedDataset& ds);

/// Logistic model of RCT membership on subgroup one-hots and covariates.
struct PropensityModel {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd rho_ec;  // fitted P(RCT | W, X) for each EC record
    double zeta = 1.0;
    Eigen::VectorXd weights;  // zeta * rho / (1 - rho) per EC record, max exactly one
};

PropensityModel fit_propensity(const CombinedDataset& ds);
inline const Eigen::VectorXd& ec_weights(const PropensityModel& pm) { return pm.weights; }

/// Row weights in design order: ones for RCT rows, then the EC weights.
Eigen::VectorXd stacked_weights(const CombinedDataset& ds, const Eigen::VectorXd& ec);

/// logistic_marginal_effects with IPW weights on the EC rows.
EffectEstimate weighted_logistic_effects(const CombinedDataset& ds,
                                         PropensityModel* propensity_out = nullptr);

}  // namespace harmony
