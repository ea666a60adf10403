#include "harmony/intervals.hpp"

#include "harmony/error.hpp"
#include "harmony/estimators.hpp"
#include "harmony/parallel.hpp"
#include "harmony/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>

namespace harmony {

std::string_view to_string(IntervalMethod method) noexcept {
    switch (method) {
        case IntervalMethod::Analytic: return "analytic";
        case IntervalMethod::Cut: return "cut";
        case IntervalMethod::Bootstrap: return "bootstrap";
        case IntervalMethod::RctOnly: return "rct_only";
    }
    return "unknown";
}

namespace {

double critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in (0, 1]");
    return normal_quantile(1.0 - alpha / 2.0);
}

IntervalSet symmetric(const Eigen::VectorXd& centre, const Eigen::VectorXd& half, IntervalMethod method,
                      double alpha) {
    return IntervalSet{centre - half, centre + half, method, alpha};
}

Eigen::VectorXd standard_errors(const Eigen::VectorXd& variances) {
    const double scale = std::max(1.0, variances.cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < variances.size(); ++k) {
        if (!std::isfinite(variances(k)) || variances(k) < -1e-12 * scale) {
            throw Error(ErrorCode::NegativeVariance,
                        "variance of subgroup " + std::to_string(k + 1) + " is " + std::to_string(variances(k)));
        }
    }
    return variances.cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

double normal_quantile(double p) {
    if (p == 0.5) return 0.0;
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

IntervalSet analytic_interval(const Eigen::VectorXd& theta, const Eigen::MatrixXd& covariance, double alpha) {
    if (covariance.rows() != theta.size() || covariance.cols() != theta.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "covariance must be K x K");
    }
    const double z = critical_value(alpha);
    return symmetric(theta, z * standard_errors(covariance.diagonal()), IntervalMethod::Analytic, alpha);
}

IntervalSet cut_interval(const Eigen::VectorXd& theta, const NormalPosterior& cut, double alpha) {
    if (cut.covariance.rows() != theta.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "cut covariance must be K x K");
    }
    const double z = critical_value(alpha);
    return symmetric(theta, z * standard_errors(cut.covariance.diagonal()), IntervalMethod::Cut, alpha);
}

IntervalSet rct_only_interval(const CombinedDataset& ds, double alpha) {
    const double z = critical_value(alpha);
    const auto K = static_cast<Eigen::Index>(ds.K);
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(K, 2), sum = n, sumsq = n;
    for (const auto& r : ds.rct) {
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        n(k, r.treatment) += 1.0;
        sum(k, r.treatment) += r.outcome;
    }
    const Eigen::MatrixXd mean = sum.cwiseQuotient(n);
    for (const auto& r : ds.rct) {
        const double e = r.outcome - mean(static_cast<Eigen::Index>(r.subgroup), r.treatment);
        sumsq(static_cast<Eigen::Index>(r.subgroup), r.treatment) += e * e;
    }
    Eigen::VectorXd centre(K), half(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (n(k, 0) < 2.0 || n(k, 1) < 2.0) {
            throw Error(ErrorCode::InsufficientData,
                        "subgroup " + ds.subgroup_labels[static_cast<std::size_t>(k)] +
                            " needs two RCT patients per arm for a variance");
        }
        centre(k) = mean(k, 1) - mean(k, 0);
        const double v = sumsq(k, 1) / (n(k, 1) - 1.0) / n(k, 1) + sumsq(k, 0) / (n(k, 0) - 1.0) / n(k, 0);
        half(k) = z * std::sqrt(v);
    }
    return symmetric(centre, half, IntervalMethod::RctOnly, alpha);
}

SimpleModelParams fit_simple_model(const CombinedDataset& ds) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(K, 3), sum = n;
    for (const auto& r : ds.rct) {
        n(static_cast<Eigen::Index>(r.subgroup), r.treatment) += 1.0;
        sum(static_cast<Eigen::Index>(r.subgroup), r.treatment) += r.outcome;
    }
    for (const auto& r : ds.ec) {
        n(static_cast<Eigen::Index>(r.subgroup), 2) += 1.0;
        sum(static_cast<Eigen::Index>(r.subgroup), 2) += r.outcome;
    }
    if ((n.leftCols(2).array() <= 0.0).any()) {
        throw Error(ErrorCode::EmptySubgroupArm, "every RCT subgroup arm needs a patient");
    }
    const Eigen::MatrixXd mean = sum.cwiseQuotient(n.cwiseMax(1.0));
    SimpleModelParams p;
    p.mu = mean.col(0);
    p.theta = mean.col(1) - mean.col(0);
    p.gamma = (n.col(2).array() > 0.0).select(mean.col(2) - mean.col(0), 0.0);
    p.phi2 = pooled_cell_variance(ds);
    return p;
}

double type7_quantile(std::vector<double>& values, double p) {
    if (values.empty()) throw Error(ErrorCode::InsufficientData, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

IntervalSet bootstrap_interval(const CombinedDataset& ds, const EstimatePipeline& pipeline,
                               const SimpleModelParams& params, std::size_t R, double alpha,
                               std::uint64_t seed, std::size_t workers) {
    if (R < 100) throw Error(ErrorCode::ConfigError, "bootstrap needs at least 100 replicates");
    critical_value(alpha);
    const auto K = static_cast<Eigen::Index>(ds.K);
    if (params.mu.size() != K || params.theta.size() != K || params.gamma.size() != K) {
        throw Error(ErrorCode::InconsistentDimensions, "bootstrap model parameters must have length K");
    }
    if (!(params.phi2 >= 0.0)) throw Error(ErrorCode::InvalidSpec, "phi2 must be non-negative");

    const Eigen::VectorXd observed = pipeline(ds);
    if (observed.size() != K) throw Error(ErrorCode::InconsistentDimensions, "pipeline must return K effects");
    const double phi = std::sqrt(params.phi2);

    Eigen::MatrixXd draws(K, static_cast<Eigen::Index>(R));
    parallel_for(R, workers, [&](std::size_t b) {
        CombinedDataset sample = ds;
        Philox4x32 gen(seed, static_cast<std::uint32_t>(b), StreamRole::Bootstrap);
        boost::random::normal_distribution<double> z;
        for (auto& r : sample.rct) {
            const auto k = static_cast<Eigen::Index>(r.subgroup);
            r.outcome = params.mu(k) + r.treatment * params.theta(k) + phi * z(gen);
        }
        for (auto& r : sample.ec) {
            const auto k = static_cast<Eigen::Index>(r.subgroup);
            r.outcome = params.mu(k) + params.gamma(k) + phi * z(gen);
        }
        try {
            draws.col(static_cast<Eigen::Index>(b)) = pipeline(sample);
        } catch (const Error& e) {
            throw ReplicateError(b, e.code(), e.what());
        }
    });

    Eigen::VectorXd half(K);
    std::vector<double> row(R);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (std::size_t b = 0; b < R; ++b) row[b] = draws(k, static_cast<Eigen::Index>(b));
        const double lo = type7_quantile(row, alpha / 2.0);
        const double hi = type7_quantile(row, 1.0 - alpha / 2.0);
        half(k) = 0.5 * (hi - lo);
    }
    return symmetric(observed, half, IntervalMethod::Bootstrap, alpha);
}

}  // namespace harmony
