#include "harmony/scenario.hpp"

#include "harmony/error.hpp"
#include "harmony/glm.hpp"
#include "harmony/rng.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>

namespace harmony {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidSpec, what);
}

}  // namespace

void ScenarioSpec::validate() const {
    const auto k = static_cast<Eigen::Index>(K);
    require(K > 0, "K must be positive");
    require(n_rct.rows() == k && n_rct.cols() == 2, "n_rct must be K x 2");
    require(n_ec.size() == k, "n_ec must have K entries");
    require((n_rct.array() > 0).all(), "every RCT subgroup arm needs at least one patient");
    require((n_ec.array() >= 0).all(), "EC counts must be non-negative");
    require(mu.size() == k && theta.size() == k && distortion.size() == k,
            "mu, theta and distortion must have K entries");
    require(mu.allFinite() && theta.allFinite() && distortion.allFinite(), "parameters must be finite");
    if (family == OutcomeFamily::Continuous) require(phi2 > 0.0 && std::isfinite(phi2), "phi2 must be positive");
    const auto d = static_cast<Eigen::Index>(covariates.d);
    require(beta.size() == d, "beta must have d entries");
    if (d > 0) {
        require(covariates.rct_mean.size() == d && covariates.rct_sd.size() == d &&
                    covariates.ec_mean.size() == d && covariates.ec_sd.size() == d,
                "covariate means and sds must have d entries");
        require((covariates.rct_sd.array() >= 0.0).all() && (covariates.ec_sd.array() >= 0.0).all(),
                "covariate sds must be non-negative");
    }
    if (pi) {
        require(pi->size() == k && (pi->array() > 0.0).all() && std::abs(pi->sum() - 1.0) < 1e-9,
                "pi must be positive and sum to one");
    }
}

double ScenarioSpec::randomization_ratio() const {
    return static_cast<double>(n_rct.col(1).sum()) / static_cast<double>(n_rct.sum());
}

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    nodes = eig.eigenvalues();
    weights = boost::math::constants::root_pi<double>() * eig.eigenvectors().row(0).transpose().array().square();
}

Eigen::VectorXd true_effects(const ScenarioSpec& spec) {
    spec.validate();
    if (spec.family == OutcomeFamily::Continuous) return spec.theta;
    double centre = 0.0, var = 0.0;
    if (spec.covariates.d > 0) {
        centre = spec.beta.dot(spec.covariates.rct_mean);
        var = spec.beta.cwiseProduct(spec.covariates.rct_sd).squaredNorm();
    }
    Eigen::VectorXd x, w;
    gauss_hermite(64, x, w);
    const double spread = std::sqrt(2.0 * var);
    Eigen::VectorXd out(spec.K);
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double lp = spec.mu(k) + centre + spread * x(i);
            acc += w(i) * (expit(lp + spec.theta(k)) - expit(lp));
        }
        out(k) = acc / boost::math::constants::root_pi<double>();
    }
    return out;
}

Eigen::VectorXd true_control_means(const ScenarioSpec& spec) {
    if (spec.family != OutcomeFamily::Continuous || spec.covariates.d > 0) {
        throw Error(ErrorCode::InvalidSpec, "control means are defined for covariate-free continuous scenarios");
    }
    return spec.mu;
}

CombinedDataset generate_scenario(const ScenarioSpec& spec, std::uint64_t seed, std::uint32_t replicate) {
    spec.validate();
    CombinedDataset ds;
    ds.K = spec.K;
    ds.d = spec.covariates.d;
    ds.family = spec.family;
    for (std::size_t k = 0; k < spec.K; ++k) ds.subgroup_labels.push_back(std::to_string(k + 1));

    const auto d = static_cast<Eigen::Index>(spec.covariates.d);
    const std::uint32_t cov_rep = spec.covariates.mode == CovariateMode::Fixed ? 0u : replicate;
    Philox4x32 cov_gen(seed, cov_rep, StreamRole::Covariates);
    Philox4x32 rct_gen(seed, replicate, StreamRole::RctOutcomes);
    Philox4x32 ec_gen(seed, replicate, StreamRole::EcOutcomes);
    boost::random::normal_distribution<double> z;
    const double phi = std::sqrt(spec.phi2);

    auto draw_x = [&](const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
        Eigen::VectorXd x(d);
        for (Eigen::Index j = 0; j < d; ++j) x(j) = mean(j) + sd(j) * z(cov_gen);
        return x;
    };
    auto draw_y = [&](double lp, Philox4x32& gen) {
        if (spec.family == OutcomeFamily::Continuous) return lp + phi * z(gen);
        return boost::random::bernoulli_distribution<double>(expit(lp))(gen) ? 1.0 : 0.0;
    };

    ds.rct.reserve(static_cast<std::size_t>(spec.n_rct.sum()));
    ds.ec.reserve(static_cast<std::size_t>(spec.n_ec.sum()));
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(spec.K); ++k) {
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < spec.n_rct(k, t); ++i) {
                SubjectRecord r;
                r.treatment = t;
                r.subgroup = static_cast<std::size_t>(k);
                r.study = Study::Rct;
                r.covariates = draw_x(spec.covariates.rct_mean, spec.covariates.rct_sd);
                const double lp = spec.mu(k) + t * spec.theta(k) + (d > 0 ? spec.beta.dot(r.covariates) : 0.0);
                r.outcome = draw_y(lp, rct_gen);
                ds.rct.push_back(std::move(r));
            }
        }
        for (int i = 0; i < spec.n_ec(k); ++i) {
            SubjectRecord r;
            r.subgroup = static_cast<std::size_t>(k);
            r.study = Study::Ec;
            r.covariates = draw_x(spec.covariates.ec_mean, spec.covariates.ec_sd);
            const double lp = spec.mu(k) + spec.distortion(k) + (d > 0 ? spec.beta.dot(r.covariates) : 0.0);
            r.outcome = draw_y(lp, ec_gen);
            ds.ec.push_back(std::move(r));
        }
    }
    return ds;
}

}  // namespace harmony
