#include "harmony/glm.hpp"

#include "harmony/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace harmony {

namespace {

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* w) {
    if (X.rows() != y.size()) {
        throw Error(ErrorCode::InconsistentDimensions,
                    "design has " + std::to_string(X.rows()) + " rows but outcome has " +
                        std::to_string(y.size()));
    }
    if (w) {
        if (w->size() != y.size()) {
            throw Error(ErrorCode::InconsistentDimensions, "weight vector length differs from rows");
        }
        if ((w->array() < 0.0).any() || !w->allFinite()) {
            throw Error(ErrorCode::InvalidDesign, "weights must be finite and non-negative");
        }
    }
}

double log_expit(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

DesignMatrix build_design(const CombinedDataset& ds, DesignModel model) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto d = static_cast<Eigen::Index>(ds.d);
    DesignMatrix design;
    using Kind = ColumnRole::Kind;

    if (model == DesignModel::OverallRct) {
        const auto n = static_cast<Eigen::Index>(ds.rct.size());
        design.values.setZero(n, 2 + d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = ds.rct[static_cast<std::size_t>(i)];
            design.values(i, 0) = 1.0;
            design.values(i, 1) = r.treatment;
            design.values.row(i).tail(d) = r.covariates.transpose();
        }
        design.roles.push_back({Kind::Intercept, 0});
        design.roles.push_back({Kind::Treatment, 0});
        for (std::size_t j = 0; j < ds.d; ++j) design.roles.push_back({Kind::Covariate, j});
        return design;
    }

    const bool with_bias = model == DesignModel::PooledSubgroupWithBias;
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const auto n = n_r + static_cast<Eigen::Index>(ds.ec.size());
    const Eigen::Index p = 2 * K + d + (with_bias ? K : 0);
    design.values.setZero(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = i < n_r ? ds.rct[static_cast<std::size_t>(i)]
                                : ds.ec[static_cast<std::size_t>(i - n_r)];
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        design.values(i, k) = 1.0;
        if (r.study == Study::Rct && r.treatment == 1) design.values(i, K + k) = 1.0;
        design.values.row(i).segment(2 * K, d) = r.covariates.transpose();
        if (with_bias && r.study == Study::Ec) design.values(i, 2 * K + d + k) = 1.0;
    }
    for (std::size_t k = 0; k < ds.K; ++k) design.roles.push_back({Kind::SubgroupIntercept, k});
    for (std::size_t k = 0; k < ds.K; ++k) design.roles.push_back({Kind::SubgroupTreatment, k});
    for (std::size_t j = 0; j < ds.d; ++j) design.roles.push_back({Kind::Covariate, j});
    if (with_bias) {
        for (std::size_t k = 0; k < ds.K; ++k) design.roles.push_back({Kind::EcBias, k});
    }
    return design;
}

Eigen::MatrixXd ec_bias_block(const CombinedDataset& ds) {
    const auto full = build_design(ds, DesignModel::PooledSubgroupWithBias);
    const auto K = static_cast<Eigen::Index>(ds.K);
    return full.values.rightCols(K);
}

Eigen::VectorXd stacked_outcomes(const CombinedDataset& ds, DesignModel model) {
    const bool rct_only = model == DesignModel::OverallRct;
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const Eigen::Index n = n_r + (rct_only ? 0 : static_cast<Eigen::Index>(ds.ec.size()));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n_r; ++i) y(i) = ds.rct[static_cast<std::size_t>(i)].outcome;
    for (Eigen::Index i = n_r; i < n; ++i) y(i) = ds.ec[static_cast<std::size_t>(i - n_r)].outcome;
    return y;
}

Eigen::MatrixXd GlmFit::covariance() const {
    const auto p = information.rows();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    if (is_ols) inv *= dispersion;
    return 0.5 * (inv + inv.transpose());
}

GlmFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const std::optional<Eigen::VectorXd>& weights) {
    check_shapes(X, y, weights ? &*weights : nullptr);
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();

    Eigen::VectorXd sqrt_w = weights ? Eigen::VectorXd(weights->array().sqrt())
                                     : Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd Xw = sqrt_w.asDiagonal() * X;
    const Eigen::VectorXd yw = sqrt_w.cwiseProduct(y);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    if (p > 0) {
        const Eigen::MatrixXd R =
            qr.matrixQR().topRows(std::min(n, p)).triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
        const auto& s = svd.singularValues();
        if (n < p || s.size() < p || s(s.size() - 1) < 1e-10 * s(0) || s(0) == 0.0) {
            throw Error(ErrorCode::RankDeficient,
                        "design is rank deficient (" + std::to_string(p) + " columns)");
        }
    }

    GlmFit fit;
    fit.is_ols = true;
    fit.coefficients = qr.solve(yw);
    const Eigen::VectorXd resid = yw - Xw * fit.coefficients;
    const Eigen::Index n_eff =
        weights ? static_cast<Eigen::Index>((weights->array() > 0.0).count()) : n;
    fit.dispersion = n_eff > p ? resid.squaredNorm() / static_cast<double>(n_eff - p) : 0.0;
    fit.information = Xw.transpose() * Xw;
    fit.converged = true;
    fit.iterations = 1;
    return fit;
}

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (weights(i) == 0.0) continue;
        ll += weights(i) * (y(i) * log_expit(eta(i)) + (1.0 - y(i)) * log_expit(-eta(i)));
    }
    return ll;
}

GlmFit fit_logistic_expected(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_mean,
                             const Eigen::VectorXd& weights, const IrlsOptions& options,
                             const std::optional<Eigen::VectorXd>& start,
                             std::vector<double>* loglik_trace) {
    check_shapes(X, y_mean, &weights);
    if ((y_mean.array() < 0.0).any() || (y_mean.array() > 1.0).any()) {
        throw Error(ErrorCode::InvalidDesign, "responses must lie in [0, 1]");
    }
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();

    {
        const Eigen::MatrixXd Xw = weights.array().sqrt().matrix().asDiagonal() * X;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
        qr.setThreshold(1e-10);
        if (qr.rank() < p) {
            throw Error(ErrorCode::RankDeficient,
                        "weighted design has rank " + std::to_string(qr.rank()) + " < " +
                            std::to_string(p));
        }
    }

    GlmFit fit;
    fit.coefficients = start ? *start : Eigen::VectorXd::Zero(p);
    if (fit.coefficients.size() != p) {
        throw Error(ErrorCode::InconsistentDimensions, "starting vector has wrong length");
    }
    double ll = logistic_loglik(X, y_mean, weights, fit.coefficients);
    if (loglik_trace) loglik_trace->push_back(ll);

    Eigen::VectorXd mu(n), working(n);
    for (int iter = 0; iter <= options.max_iter; ++iter) {
        const Eigen::VectorXd eta = X * fit.coefficients;
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = expit(eta(i));
            working(i) = weights(i) * mu(i) * (1.0 - mu(i));
        }
        const Eigen::VectorXd score =
            X.transpose() * (weights.array() * (y_mean - mu).array()).matrix();
        const Eigen::MatrixXd H = X.transpose() * working.asDiagonal() * X;
        fit.information = H;
        fit.iterations = iter;

        Eigen::LLT<Eigen::MatrixXd> llt(H);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorCode::SeparationDetected,
                        "Fisher information became singular (fitted probabilities at 0 or 1)");
        }
        const Eigen::VectorXd step = llt.solve(score);
        const double score_norm = score.lpNorm<Eigen::Infinity>();
        // Newton steps stay O(1) along a separating direction even when the score
        // underflows, so both must be small.
        if (score_norm < options.tol && step.lpNorm<Eigen::Infinity>() < 1e-6) {
            fit.converged = true;
            break;
        }
        if (iter == options.max_iter) break;

        double scale = 1.0;
        Eigen::VectorXd candidate = fit.coefficients + step;
        double ll_new = logistic_loglik(X, y_mean, weights, candidate);
        int halvings = 0;
        while (!(ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))) && halvings < options.max_halvings) {
            scale *= 0.5;
            candidate = fit.coefficients + scale * step;
            ll_new = logistic_loglik(X, y_mean, weights, candidate);
            ++halvings;
        }
        if (ll_new < ll - 1e-12 * (1.0 + std::abs(ll))) {
            // No ascent along the Newton direction; keep the current point.
            candidate = fit.coefficients;
            ll_new = ll;
        }
        fit.coefficients = candidate;
        ll = ll_new;
        if (loglik_trace) loglik_trace->push_back(ll);

        if (fit.coefficients.lpNorm<Eigen::Infinity>() > options.coefficient_cap) {
            throw Error(ErrorCode::SeparationDetected,
                        "coefficient magnitude exceeded " + std::to_string(options.coefficient_cap) +
                            " on the logit scale");
        }
    }
    if (!fit.converged) {
        throw Error(ErrorCode::NotConverged,
                    "IRLS did not reach score tolerance in " + std::to_string(options.max_iter) +
                        " iterations");
    }
    return fit;
}

GlmFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& weights, const IrlsOptions& options) {
    check_shapes(X, y, &weights);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) {
            throw Error(ErrorCode::InvalidDesign, "logistic outcomes must be 0 or 1");
        }
    }
    return fit_logistic_expected(X, y, weights, options);
}

}  // namespace harmony
