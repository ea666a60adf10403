#include "harmony/limit_map.hpp"

#include "harmony/error.hpp"
#include "harmony/estimators.hpp"

namespace harmony {

double LimitMapSpec::mixing_fraction() const {
    const double n_e = static_cast<double>(design.ec.size());
    return n_e / (n_e + static_cast<double>(design.rct.size()));
}

LimitMapSpec make_limit_map(const CombinedDataset& ds, const std::optional<Eigen::VectorXd>& ec_weights,
                            const std::optional<Eigen::VectorXd>& anchor) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto d = static_cast<Eigen::Index>(ds.d);
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const auto n_e = static_cast<Eigen::Index>(ds.ec.size());
    const Eigen::Index p = 2 * K + d;

    LimitMapSpec spec;
    spec.design = ds;
    if (anchor) {
        if (anchor->size() != p) {
            throw Error(ErrorCode::InconsistentDimensions, "anchor must have 2K + d entries");
        }
        spec.anchor = *anchor;
    } else {
        const CombinedDataset rct = ds.rct_only();
        const auto M1 = build_design(rct, DesignModel::PooledSubgroup);
        spec.anchor = fit_logistic_irls(M1, stacked_outcomes(rct, DesignModel::PooledSubgroup),
                                        Eigen::VectorXd::Ones(n_r))
                          .coefficients;
    }
    spec.ec_weights = ec_weights ? *ec_weights : Eigen::VectorXd::Ones(n_e);
    if (spec.ec_weights.size() != n_e) {
        throw Error(ErrorCode::InconsistentDimensions, "EC weight vector length differs from EC rows");
    }

    double treated = 0.0;
    for (const auto& r : ds.rct) treated += r.treatment;
    spec.p_treated = treated / static_cast<double>(n_r);

    spec.X = Eigen::MatrixXd::Zero(2 * n_r + n_e, p);
    spec.w.resize(2 * n_r + n_e);
    spec.y_rct.resize(2 * n_r);
    for (Eigen::Index i = 0; i < n_r; ++i) {
        const auto& r = ds.rct[static_cast<std::size_t>(i)];
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        const double base = spec.anchor(k) + (d > 0 ? spec.anchor.tail(d).dot(r.covariates) : 0.0);
        for (int t = 0; t < 2; ++t) {
            const Eigen::Index row = t * n_r + i;
            spec.X(row, k) = 1.0;
            if (t == 1) spec.X(row, K + k) = 1.0;
            if (d > 0) spec.X.row(row).tail(d) = r.covariates.transpose();
            spec.w(row) = t == 1 ? spec.p_treated : 1.0 - spec.p_treated;
            spec.y_rct(row) = expit(base + (t == 1 ? spec.anchor(K + k) : 0.0));
        }
    }
    spec.ec_base_lp.resize(n_e);
    for (Eigen::Index i = 0; i < n_e; ++i) {
        const auto& r = ds.ec[static_cast<std::size_t>(i)];
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        const Eigen::Index row = 2 * n_r + i;
        spec.X(row, k) = 1.0;
        if (d > 0) spec.X.row(row).tail(d) = r.covariates.transpose();
        spec.w(row) = spec.ec_weights(i);
        spec.ec_base_lp(i) = spec.anchor(k) + (d > 0 ? spec.anchor.tail(d).dot(r.covariates) : 0.0);
    }
    return spec;
}

Eigen::VectorXd anchor_theta(const LimitMapSpec& spec) {
    return marginal_effects(spec.design, spec.anchor);
}

Eigen::VectorXd limit_map_theta(const LimitMapSpec& spec, const Eigen::VectorXd& delta,
                                Eigen::VectorXd* coefficients_out) {
    if (delta.size() != static_cast<Eigen::Index>(spec.K())) {
        throw Error(ErrorCode::InconsistentDimensions, "delta must have length K");
    }
    const auto n_rr = spec.y_rct.size();
    Eigen::VectorXd y(spec.X.rows());
    y.head(n_rr) = spec.y_rct;
    for (Eigen::Index i = 0; i < spec.ec_base_lp.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(spec.design.ec[static_cast<std::size_t>(i)].subgroup);
        y(n_rr + i) = expit(spec.ec_base_lp(i) + delta(k));
    }
    const auto fit = fit_logistic_expected(spec.X, y, spec.w, spec.irls, spec.anchor);
    if (coefficients_out) *coefficients_out = fit.coefficients;
    return marginal_effects(spec.design, fit.coefficients);
}

Eigen::MatrixXd limit_map_jacobian(const LimitMapSpec& spec, double fd_step) {
    if (!(fd_step > 0.0)) throw Error(ErrorCode::InvalidDesign, "finite-difference step must be positive");
    const auto K = static_cast<Eigen::Index>(spec.K());
    Eigen::MatrixXd B(K, K);
    for (Eigen::Index j = 0; j < K; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
        e(j) = fd_step;
        B.col(j) = (limit_map_theta(spec, e) - limit_map_theta(spec, -e)) / (2.0 * fd_step);
    }
    return B;
}

Eigen::MatrixXd limit_map_jacobian_factorized(const LimitMapSpec& spec) {
    const auto K = static_cast<Eigen::Index>(spec.K());
    const auto n_rr = spec.y_rct.size();
    const auto n_e = spec.ec_base_lp.size();
    const Eigen::VectorXd lp = spec.X * spec.anchor;
    Eigen::VectorXd curvature(lp.size());
    for (Eigen::Index i = 0; i < lp.size(); ++i) curvature(i) = spec.w(i) * expit_derivative(lp(i));
    const Eigen::MatrixXd H = spec.X.transpose() * curvature.asDiagonal() * spec.X;

    // d(score)/d(delta_k) = sum over EC rows in k of w g'(lp) x.
    Eigen::MatrixXd dscore = Eigen::MatrixXd::Zero(spec.X.cols(), K);
    for (Eigen::Index i = 0; i < n_e; ++i) {
        const auto k = static_cast<Eigen::Index>(spec.design.ec[static_cast<std::size_t>(i)].subgroup);
        dscore.col(k) += spec.w(n_rr + i) * expit_derivative(spec.ec_base_lp(i)) *
                         spec.X.row(n_rr + i).transpose();
    }
    const Eigen::MatrixXd dpsi = H.ldlt().solve(dscore);
    return marginal_effects_gradient(spec.design, spec.anchor) * dpsi;
}

BiasModel bd_direction_glm(const LimitMapSpec& spec, const Eigen::VectorXd& pi, double fd_step) {
    return bias_model_from_matrix(limit_map_jacobian(spec, fd_step), pi);
}

}  // namespace harmony
