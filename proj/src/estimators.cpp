#include "harmony/estimators.hpp"

#include "harmony/error.hpp"

#include <cmath>
#include <string>

namespace harmony {

std::string_view to_string(EstimatorMethod method) noexcept {
    switch (method) {
        case EstimatorMethod::DiffMeans: return "diff_means";
        case EstimatorMethod::Ols: return "ols";
        case EstimatorMethod::LogisticMarginal: return "logistic_marginal";
        case EstimatorMethod::IpwLogistic: return "ipw_logistic";
        case EstimatorMethod::Oracle: return "oracle";
        case EstimatorMethod::External: return "external";
        case EstimatorMethod::Harmonized: return "harmonized";
    }
    return "unknown";
}

EffectEstimate EffectEstimate::external(Eigen::VectorXd theta, std::optional<Eigen::MatrixXd> covariance,
                                        bool uses_ec) {
    EffectEstimate e;
    e.theta = std::move(theta);
    e.covariance = std::move(covariance);
    e.method = EstimatorMethod::External;
    e.uses_ec = uses_ec;
    return e;
}

EffectEstimate EffectEstimate::external_overall(double theta, std::optional<double> variance) {
    EffectEstimate e;
    e.theta_overall = theta;
    e.overall_variance = variance;
    e.method = EstimatorMethod::External;
    return e;
}

namespace {

double cell_variance(const std::vector<double>& ys) {
    double m = 0.0;
    for (double y : ys) m += y;
    m /= static_cast<double>(ys.size());
    double ss = 0.0;
    for (double y : ys) ss += (y - m) * (y - m);
    return ss / static_cast<double>(ys.size() - 1);
}

struct CellOutcomes {
    std::vector<std::vector<double>> treated, control, ec;
};

CellOutcomes collect_cells(const CombinedDataset& ds) {
    CellOutcomes c;
    c.treated.resize(ds.K);
    c.control.resize(ds.K);
    c.ec.resize(ds.K);
    for (const auto& r : ds.rct) {
        (r.treatment == 1 ? c.treated : c.control)[r.subgroup].push_back(r.outcome);
    }
    for (const auto& r : ds.ec) c.ec[r.subgroup].push_back(r.outcome);
    return c;
}

double mean_of(const std::vector<double>& ys) {
    double s = 0.0;
    for (double y : ys) s += y;
    return s / static_cast<double>(ys.size());
}

[[noreturn]] void empty_subgroup_arm(const CombinedDataset& ds, std::size_t k, const char* arm) {
    const std::string label = k < ds.subgroup_labels.size() ? ds.subgroup_labels[k] : std::to_string(k);
    throw Error(ErrorCode::EmptySubgroupArm, std::string("subgroup '") + label + "' has no " + arm);
}

Eigen::Index n_rows(const CombinedDataset& ds) {
    return static_cast<Eigen::Index>(ds.rct.size() + ds.ec.size());
}

Eigen::MatrixXd normal_weights(const Eigen::MatrixXd& X) {
    // Rows of (X^T X)^{-1} X^T; X has full column rank (checked by the OLS fit).
    const Eigen::MatrixXd XtX = X.transpose() * X;
    return XtX.ldlt().solve(X.transpose());
}

void check_logistic_outcomes(const CombinedDataset& ds) {
    if (ds.family != OutcomeFamily::Binary) {
        for (const auto* rows : {&ds.rct, &ds.ec}) {
            for (const auto& r : *rows) {
                if (r.outcome != 0.0 && r.outcome != 1.0) {
                    throw Error(ErrorCode::InvalidDesign, "logistic estimators need 0/1 outcomes");
                }
            }
        }
    }
}

void check_subgroup_arms(const CombinedDataset& ds, bool pooled_controls) {
    std::vector<int> treated(ds.K, 0), control(ds.K, 0);
    for (const auto& r : ds.rct) ++(r.treatment == 1 ? treated : control)[r.subgroup];
    if (pooled_controls) {
        for (const auto& r : ds.ec) ++control[r.subgroup];
    }
    for (std::size_t k = 0; k < ds.K; ++k) {
        if (treated[k] == 0) empty_subgroup_arm(ds, k, "treated RCT patients");
        if (control[k] == 0) empty_subgroup_arm(ds, k, "control patients");
    }
}

}  // namespace

EffectEstimate diff_means_overall(const CombinedDataset& ds) {
    std::vector<double> arms[2];
    for (const auto& r : ds.rct) arms[r.treatment].push_back(r.outcome);
    if (arms[0].empty() || arms[1].empty()) {
        throw Error(ErrorCode::EmptyArm, arms[0].empty() ? "RCT control arm is empty"
                                                          : "RCT treated arm is empty");
    }
    EffectEstimate e;
    e.theta_overall = mean_of(arms[1]) - mean_of(arms[0]);
    if (arms[0].size() > 1 && arms[1].size() > 1) {
        e.overall_variance = cell_variance(arms[1]) / static_cast<double>(arms[1].size()) +
                             cell_variance(arms[0]) / static_cast<double>(arms[0].size());
    }
    e.method = EstimatorMethod::DiffMeans;
    e.uses_ec = false;
    return e;
}

EffectEstimate diff_means_pooled_subgroups(const CombinedDataset& ds) {
    const auto cells = collect_cells(ds);
    const auto K = static_cast<Eigen::Index>(ds.K);
    EffectEstimate e;
    e.theta.resize(K);
    Eigen::VectorXd var(K);
    bool have_var = true;
    for (std::size_t k = 0; k < ds.K; ++k) {
        std::vector<double> controls = cells.control[k];
        controls.insert(controls.end(), cells.ec[k].begin(), cells.ec[k].end());
        if (cells.treated[k].empty()) empty_subgroup_arm(ds, k, "treated RCT patients");
        if (controls.empty()) empty_subgroup_arm(ds, k, "control patients");
        const auto i = static_cast<Eigen::Index>(k);
        e.theta(i) = mean_of(cells.treated[k]) - mean_of(controls);
        if (cells.treated[k].size() > 1 && controls.size() > 1) {
            var(i) = cell_variance(cells.treated[k]) / static_cast<double>(cells.treated[k].size()) +
                     cell_variance(controls) / static_cast<double>(controls.size());
        } else {
            have_var = false;
        }
    }
    if (have_var) e.covariance = Eigen::MatrixXd(var.asDiagonal());
    e.method = EstimatorMethod::DiffMeans;
    e.uses_ec = true;
    return e;
}

EffectEstimate oracle_subgroups(const CombinedDataset& ds, const Eigen::VectorXd& mu_true) {
    if (mu_true.size() != static_cast<Eigen::Index>(ds.K)) {
        throw Error(ErrorCode::InconsistentDimensions, "mu_true must have length K");
    }
    const auto cells = collect_cells(ds);
    EffectEstimate e;
    e.theta.resize(mu_true.size());
    for (std::size_t k = 0; k < ds.K; ++k) {
        if (cells.treated[k].empty()) empty_subgroup_arm(ds, k, "treated RCT patients");
        const auto i = static_cast<Eigen::Index>(k);
        e.theta(i) = mean_of(cells.treated[k]) - mu_true(i);
    }
    e.method = EstimatorMethod::Oracle;
    e.uses_ec = false;
    return e;
}

EffectEstimate rct_only_subgroups(const CombinedDataset& ds, RctModel model) {
    const CombinedDataset rct = ds.rct_only();
    EffectEstimate e;
    switch (model) {
        case RctModel::DiffMeans: {
            check_subgroup_arms(rct, false);
            e = diff_means_pooled_subgroups(rct);
            break;
        }
        case RctModel::Ols:
            check_subgroup_arms(rct, false);
            e = ols_subgroup_effects(rct);
            break;
        case RctModel::Logistic:
            check_subgroup_arms(rct, false);
            e = logistic_marginal_effects(rct);
            break;
    }
    e.uses_ec = false;
    return e;
}

LinearPair diff_means_weights(const CombinedDataset& ds) {
    check_subgroup_arms(ds, true);
    const auto K = static_cast<Eigen::Index>(ds.K);
    Eigen::VectorXd n1 = Eigen::VectorXd::Zero(K), n0 = Eigen::VectorXd::Zero(K);
    double N1 = 0.0, N0 = 0.0;
    for (const auto& r : ds.rct) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        if (r.treatment == 1) {
            n1(k) += 1.0;
            N1 += 1.0;
        } else {
            n0(k) += 1.0;
            N0 += 1.0;
        }
    }
    for (const auto& r : ds.ec) n0(static_cast<Eigen::Index>(r.subgroup)) += 1.0;
    if (N0 == 0.0 || N1 == 0.0) throw Error(ErrorCode::EmptyArm, "an RCT arm is empty");

    LinearPair w;
    w.subgroup_weights = Eigen::MatrixXd::Zero(K, n_rows(ds));
    w.overall_weights = Eigen::RowVectorXd::Zero(n_rows(ds));
    Eigen::Index i = 0;
    for (const auto& r : ds.rct) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        if (r.treatment == 1) {
            w.subgroup_weights(k, i) = 1.0 / n1(k);
            w.overall_weights(i) = 1.0 / N1;
        } else {
            w.subgroup_weights(k, i) = -1.0 / n0(k);
            w.overall_weights(i) = -1.0 / N0;
        }
        ++i;
    }
    for (const auto& r : ds.ec) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        w.subgroup_weights(k, i) = -1.0 / n0(k);
        ++i;
    }
    return w;
}

LinearPair ols_weights(const CombinedDataset& ds) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const auto M1 = build_design(ds, DesignModel::PooledSubgroup);
    const auto M0 = build_design(ds, DesignModel::OverallRct);
    LinearPair w;
    w.subgroup_weights = normal_weights(M1.values).middleRows(K, K);
    w.overall_weights = Eigen::RowVectorXd::Zero(n_rows(ds));
    w.overall_weights.head(n_r) = normal_weights(M0.values).row(1);
    return w;
}

Eigen::MatrixXd joint_covariance(const LinearPair& weights, double phi2) {
    const auto K = weights.subgroup_weights.rows();
    Eigen::MatrixXd A(K + 1, weights.subgroup_weights.cols());
    A.topRows(K) = weights.subgroup_weights;
    A.row(K) = weights.overall_weights;
    Eigen::MatrixXd S = phi2 * (A * A.transpose());
    return 0.5 * (S + S.transpose());
}

double pooled_cell_variance(const CombinedDataset& ds) {
    const auto cells = collect_cells(ds);
    double ss = 0.0;
    double n = 0.0;
    double groups = 0.0;
    auto accumulate = [&](const std::vector<double>& ys) {
        if (ys.empty()) return;
        const double m = mean_of(ys);
        for (double y : ys) ss += (y - m) * (y - m);
        n += static_cast<double>(ys.size());
        groups += 1.0;
    };
    for (std::size_t k = 0; k < ds.K; ++k) {
        accumulate(cells.treated[k]);
        accumulate(cells.control[k]);
        accumulate(cells.ec[k]);
    }
    if (n <= groups) {
        throw Error(ErrorCode::InsufficientData, "no residual degrees of freedom for the variance");
    }
    return ss / (n - groups);
}

EffectEstimate ols_subgroup_effects(const CombinedDataset& ds) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto M1 = build_design(ds, DesignModel::PooledSubgroup);
    const auto fit = fit_ols(M1, stacked_outcomes(ds, DesignModel::PooledSubgroup));
    EffectEstimate e;
    e.theta = fit.coefficients.segment(K, K);
    e.covariance = fit.covariance().block(K, K, K, K);
    e.method = EstimatorMethod::Ols;
    e.uses_ec = !ds.ec.empty();
    return e;
}

EffectEstimate ols_overall_effect(const CombinedDataset& ds) {
    const auto M0 = build_design(ds, DesignModel::OverallRct);
    const auto fit = fit_ols(M0, stacked_outcomes(ds, DesignModel::OverallRct));
    EffectEstimate e;
    e.theta_overall = fit.coefficients(1);
    e.overall_variance = fit.covariance()(1, 1);
    e.method = EstimatorMethod::Ols;
    e.uses_ec = false;
    return e;
}

Eigen::VectorXd marginal_effects(const CombinedDataset& ds, const Eigen::VectorXd& coefficients) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto d = static_cast<Eigen::Index>(ds.d);
    const Eigen::VectorXd beta = coefficients.tail(d);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(K);
    for (const auto& r : ds.rct) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        const double base = coefficients(k) + (d > 0 ? beta.dot(r.covariates) : 0.0);
        theta(k) += expit(base + coefficients(K + k)) - expit(base);
        count(k) += 1.0;
    }
    for (Eigen::Index k = 0; k < K; ++k) {
        if (count(k) == 0.0) empty_subgroup_arm(ds, static_cast<std::size_t>(k), "RCT patients");
    }
    return theta.cwiseQuotient(count);
}

Eigen::MatrixXd marginal_effects_gradient(const CombinedDataset& ds,
                                          const Eigen::VectorXd& coefficients) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto d = static_cast<Eigen::Index>(ds.d);
    const Eigen::VectorXd beta = coefficients.tail(d);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, 2 * K + d);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(K);
    for (const auto& r : ds.rct) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        const double base = coefficients(k) + (d > 0 ? beta.dot(r.covariates) : 0.0);
        const double g1 = expit_derivative(base + coefficients(K + k));
        const double g0 = expit_derivative(base);
        G(k, k) += g1 - g0;
        G(k, K + k) += g1;
        if (d > 0) G.row(k).tail(d) += (g1 - g0) * r.covariates.transpose();
        count(k) += 1.0;
    }
    for (Eigen::Index k = 0; k < K; ++k) G.row(k) /= count(k);
    return G;
}

LogisticEffects logistic_marginal_fit(const CombinedDataset& ds,
                                      const std::optional<Eigen::VectorXd>& row_weights) {
    check_logistic_outcomes(ds);
    check_subgroup_arms(ds, true);
    const auto M1 = build_design(ds, DesignModel::PooledSubgroup);
    const Eigen::VectorXd y = stacked_outcomes(ds, DesignModel::PooledSubgroup);
    Eigen::VectorXd w(M1.rows());
    if (row_weights) {
        if (row_weights->size() != M1.rows()) {
            throw Error(ErrorCode::InconsistentDimensions, "row weights must match design rows");
        }
        w = *row_weights;
    } else {
        Eigen::Index i = 0;
        for (const auto& r : ds.rct) w(i++) = r.weight;
        for (const auto& r : ds.ec) w(i++) = r.weight;
    }
    LogisticEffects out;
    out.fit = fit_logistic_irls(M1, y, w);
    out.estimate.theta = marginal_effects(ds, out.fit.coefficients);
    const Eigen::MatrixXd G = marginal_effects_gradient(ds, out.fit.coefficients);
    Eigen::MatrixXd V = G * out.fit.covariance() * G.transpose();
    out.estimate.covariance = 0.5 * (V + V.transpose());
    out.estimate.method = EstimatorMethod::LogisticMarginal;
    out.estimate.uses_ec = !ds.ec.empty();
    return out;
}

EffectEstimate logistic_overall_rct(const CombinedDataset& ds) {
    check_logistic_outcomes(ds);
    const auto M0 = build_design(ds, DesignModel::OverallRct);
    const Eigen::VectorXd y = stacked_outcomes(ds, DesignModel::OverallRct);
    const auto fit = fit_logistic_irls(M0, y, Eigen::VectorXd::Ones(M0.rows()));
    const auto& c = fit.coefficients;
    const auto d = static_cast<Eigen::Index>(ds.d);
    double theta = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(c.size());
    for (const auto& r : ds.rct) {
        const double base = c(0) + (d > 0 ? c.tail(d).dot(r.covariates) : 0.0);
        theta += expit(base + c(1)) - expit(base);
        const double g1 = expit_derivative(base + c(1));
        const double g0 = expit_derivative(base);
        grad(0) += g1 - g0;
        grad(1) += g1;
        if (d > 0) grad.tail(d) += (g1 - g0) * r.covariates;
    }
    const double n = static_cast<double>(ds.rct.size());
    EffectEstimate e;
    e.theta_overall = theta / n;
    grad /= n;
    e.overall_variance = grad.dot(fit.covariance() * grad);
    e.method = EstimatorMethod::LogisticMarginal;
    e.uses_ec = false;
    return e;
}

PropensityModel fit_propensity(const CombinedDataset& ds) {
    if (ds.rct.empty() || ds.ec.empty()) {
        throw Error(ErrorCode::InsufficientData, "propensity model needs both studies");
    }
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto d = static_cast<Eigen::Index>(ds.d);
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const auto n = n_rows(ds);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, K + d);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = i < n_r ? ds.rct[static_cast<std::size_t>(i)]
                                : ds.ec[static_cast<std::size_t>(i - n_r)];
        X(i, static_cast<Eigen::Index>(r.subgroup)) = 1.0;
        if (d > 0) X.row(i).tail(d) = r.covariates.transpose();
        y(i) = i < n_r ? 1.0 : 0.0;
    }
    const auto fit = fit_logistic_irls(X, y, Eigen::VectorXd::Ones(n));

    PropensityModel pm;
    pm.coefficients = fit.coefficients;
    const Eigen::VectorXd lp = X.bottomRows(n - n_r) * fit.coefficients;
    pm.rho_ec = lp.unaryExpr([](double v) { return expit(v); });
    // odds = exp(lp); dividing by the largest odds keeps everything in (0, 1].
    const double max_lp = lp.maxCoeff();
    pm.zeta = std::exp(-max_lp);
    pm.weights = (lp.array() - max_lp).exp().matrix();
    return pm;
}

Eigen::VectorXd stacked_weights(const CombinedDataset& ds, const Eigen::VectorXd& ec) {
    if (ec.size() != static_cast<Eigen::Index>(ds.ec.size())) {
        throw Error(ErrorCode::InconsistentDimensions, "EC weight vector length differs from EC rows");
    }
    Eigen::VectorXd w(n_rows(ds));
    w.head(static_cast<Eigen::Index>(ds.rct.size())).setOnes();
    w.tail(ec.size()) = ec;
    return w;
}

EffectEstimate weighted_logistic_effects(const CombinedDataset& ds, PropensityModel* propensity_out) {
    PropensityModel pm = fit_propensity(ds);
    EffectEstimate e = logistic_marginal_effects(ds, stacked_weights(ds, pm.weights));
    e.method = EstimatorMethod::IpwLogistic;
    if (propensity_out) *propensity_out = std::move(pm);
    return e;
}

}  // namespace harmony
