#include "harmony/bayes_cut.hpp"

#include "harmony/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace harmony {

NormalPrior NormalPrior::flat_prior(Eigen::Index p) {
    NormalPrior prior;
    prior.mean = Eigen::VectorXd::Zero(p);
    prior.covariance = Eigen::MatrixXd::Zero(p, p);
    prior.flat = true;
    return prior;
}

NormalPrior NormalPrior::diagonal(Eigen::Index p, double variance, Eigen::VectorXd mean) {
    if (!(variance >= 0.0)) throw Error(ErrorCode::SingularPrior, "prior variance must be non-negative");
    NormalPrior prior;
    prior.mean = mean.size() == 0 ? Eigen::VectorXd::Zero(p) : std::move(mean);
    if (prior.mean.size() != p) throw Error(ErrorCode::InconsistentDimensions, "prior mean length");
    prior.covariance = variance * Eigen::MatrixXd::Identity(p, p);
    return prior;
}

NormalPosterior conjugate_update(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise_var,
                                 const NormalPrior& prior) {
    if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidDesign, "noise variance must be positive");
    if (X.rows() != y.size()) throw Error(ErrorCode::InconsistentDimensions, "design and outcome rows differ");
    const auto p = X.cols();
    const Eigen::MatrixXd info = X.transpose() * X / noise_var;
    const Eigen::VectorXd score = X.transpose() * y / noise_var;

    NormalPosterior post;
    if (prior.flat) {
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
        if (llt.info() != Eigen::Success ||
            !(eig.eigenvalues().minCoeff() > 1e-12 * eig.eigenvalues().maxCoeff())) {
            throw Error(ErrorCode::SingularPosterior, "flat prior with unidentified parameters");
        }
        post.covariance = llt.solve(Eigen::MatrixXd::Identity(p, p));
        post.mean = llt.solve(score);
    } else {
        const Eigen::MatrixXd& C = prior.covariance;
        if (C.rows() != p || C.cols() != p || prior.mean.size() != p) {
            throw Error(ErrorCode::InconsistentDimensions, "prior dimensions differ from the model");
        }
        const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
        if (!C.allFinite() || (C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw Error(ErrorCode::SingularPrior, "prior covariance must be finite and symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
        if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
            throw Error(ErrorCode::SingularPrior, "prior covariance is not positive semidefinite");
        }
        // C = L L^T with L allowed to be rank deficient, so dogmatic priors work.
        const Eigen::MatrixXd L =
            eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(p, p) + L.transpose() * info * L;
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        const Eigen::VectorXd resid_score = score - info * prior.mean;
        post.covariance = L * llt.solve(L.transpose());
        post.mean = prior.mean + L * llt.solve(L.transpose() * resid_score);
    }
    post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
    return post;
}

NormalPosterior analyst1_posterior(const CombinedDataset& ds, const NormalPrior& prior, double sigma2) {
    const auto n = static_cast<Eigen::Index>(ds.rct.size());
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = ds.rct[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        X(i, 1) = r.treatment;
        y(i) = r.outcome;
    }
    auto post = conjugate_update(X, y, sigma2, prior);
    post.labels = {"mu", "theta"};
    return post;
}

NormalPosterior analyst2_posterior(const CombinedDataset& ds, const NormalPrior& prior, double phi2) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto n_r = static_cast<Eigen::Index>(ds.rct.size());
    const auto n = n_r + static_cast<Eigen::Index>(ds.ec.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 2 * K);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = i < n_r ? ds.rct[static_cast<std::size_t>(i)] : ds.ec[static_cast<std::size_t>(i - n_r)];
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        X(i, k) = 1.0;
        if (r.study == Study::Rct && r.treatment == 1) X(i, K + k) = 1.0;
        y(i) = r.outcome;
    }
    auto post = conjugate_update(X, y, phi2, prior);
    for (Eigen::Index k = 0; k < K; ++k) post.labels.push_back("mu_" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < K; ++k) post.labels.push_back("theta_" + std::to_string(k + 1));
    return post;
}

namespace {

struct ThetaBlock {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd cov_pi;  // Sigma2 pi
    double var_overall;      // pi^T Sigma2 pi
};

ThetaBlock theta_block(const NormalPosterior& a2, const Eigen::VectorXd& pi) {
    const auto K = pi.size();
    if (a2.mean.size() != 2 * K || a2.covariance.rows() != 2 * K) {
        throw Error(ErrorCode::InconsistentDimensions, "Analyst 2 posterior must cover (mu, theta) for K subgroups");
    }
    ThetaBlock b;
    b.mean = a2.mean.tail(K);
    b.cov = a2.covariance.bottomRightCorner(K, K);
    b.cov_pi = b.cov * pi;
    b.var_overall = pi.dot(b.cov_pi);
    if (!(b.var_overall > 1e-300)) {
        throw Error(ErrorCode::SingularPosterior, "Analyst 2 posterior variance of the overall effect is zero");
    }
    return b;
}

std::vector<std::string> theta_labels(Eigen::Index K) {
    std::vector<std::string> labels;
    for (Eigen::Index k = 0; k < K; ++k) labels.push_back("theta_" + std::to_string(k + 1));
    return labels;
}

}  // namespace

NormalPosterior cut_distribution(const NormalPosterior& a1, const NormalPosterior& a2, const Eigen::VectorXd& pi) {
    if (a1.mean.size() != 2) throw Error(ErrorCode::InconsistentDimensions, "Analyst 1 posterior must be (mu, theta)");
    const auto b = theta_block(a2, pi);
    const double m1 = a1.mean(1);
    const double s1 = a1.covariance(1, 1);
    NormalPosterior out;
    out.mean = b.mean + (m1 - pi.dot(b.mean)) / b.var_overall * b.cov_pi;
    out.covariance = b.cov + (s1 - b.var_overall) / (b.var_overall * b.var_overall) * b.cov_pi * b.cov_pi.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.labels = theta_labels(pi.size());
    return out;
}

NormalPosterior plug_in_distribution(const NormalPosterior& a2, const Eigen::VectorXd& pi, double theta_a1) {
    const auto b = theta_block(a2, pi);
    NormalPosterior out;
    out.mean = b.mean + (theta_a1 - pi.dot(b.mean)) / b.var_overall * b.cov_pi;
    out.covariance = b.cov - b.cov_pi * b.cov_pi.transpose() / b.var_overall;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.labels = theta_labels(pi.size());
    return out;
}

}  // namespace harmony
