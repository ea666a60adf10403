#include "harmony/harmonize.hpp"

#include "harmony/glm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace harmony {

std::string Lambda::to_string() const {
    if (full_) return "full";
    std::ostringstream os;
    os << value_;
    return os.str();
}

std::string_view to_string(SigmaMode mode) noexcept {
    switch (mode) {
        case SigmaMode::Fixed: return "fixed";
        case SigmaMode::BiasDirected: return "bd";
        case SigmaMode::VarianceDirected: return "vd";
    }
    return "unknown";
}

namespace {

void check_direction(const Eigen::VectorXd& u, const Eigen::VectorXd& pi) {
    if (u.size() != pi.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "direction length differs from K");
    }
    if (!u.allFinite() || std::abs(pi.dot(u) - 1.0) > 1e-10) {
        throw Error(ErrorCode::DegenerateDirection, "direction must satisfy pi^T u = 1");
    }
}

bool degenerate(const Eigen::VectorXd& b, const Eigen::VectorXd& pi) {
    const double scale = pi.cwiseAbs().dot(b.cwiseAbs());
    return !(scale > 0.0) || !b.allFinite() || std::abs(pi.dot(b)) <= 1e-12 * scale;
}

}  // namespace

void HarmonizationConfig::validate(const Eigen::VectorXd& pi) const {
    if (direction) {
        if (!lambda.is_full()) {
            throw Error(ErrorCode::ConfigError, "a fixed direction requires lambda = full");
        }
        check_direction(*direction, pi);
        return;
    }
    check_sigma(sigma);
    if (sigma.rows() != pi.size()) {
        throw Error(ErrorCode::InconsistentDimensions,
                    "sigma is " + std::to_string(sigma.rows()) + " x " + std::to_string(sigma.cols()) +
                        " but K = " + std::to_string(pi.size()));
    }
}

EffectEstimate harmonize(const EffectEstimate& initial, const EffectEstimate& overall,
                         const Eigen::VectorXd& pi, const HarmonizationConfig& cfg,
                         const std::optional<Eigen::MatrixXd>& joint_covariance) {
    const auto K = pi.size();
    if (initial.theta.size() != K) {
        throw Error(ErrorCode::InconsistentDimensions,
                    "initial estimate has " + std::to_string(initial.theta.size()) +
                        " subgroups but pi has " + std::to_string(K));
    }
    if (!overall.theta_overall) {
        throw Error(ErrorCode::InconsistentDimensions, "overall estimate carries no overall effect");
    }
    cfg.validate(pi);

    EffectEstimate out;
    out.method = EstimatorMethod::Harmonized;
    out.uses_ec = initial.uses_ec;
    out.theta_overall = overall.theta_overall;
    Eigen::MatrixXd P(K, K + 1);
    if (cfg.direction) {
        const auto& u = *cfg.direction;
        out.theta = harmonize_along(initial.theta, *overall.theta_overall, pi, u);
        P.leftCols(K) = Eigen::MatrixXd::Identity(K, K) - u * pi.transpose();
        P.col(K) = u;
    } else {
        out.theta = harmonize_vector(initial.theta, *overall.theta_overall, pi, cfg.sigma, cfg.lambda);
        P = harmonization_operator(pi, cfg.sigma, cfg.lambda);
    }
    if (joint_covariance) {
        if (joint_covariance->rows() != K + 1 || joint_covariance->cols() != K + 1) {
            throw Error(ErrorCode::InconsistentDimensions, "joint covariance must be (K+1) x (K+1)");
        }
        Eigen::MatrixXd V = P * *joint_covariance * P.transpose();
        out.covariance = 0.5 * (V + V.transpose());
    }
    return out;
}

BiasModel bias_model_from_matrix(Eigen::MatrixXd B, const Eigen::VectorXd& pi) {
    if (B.rows() != pi.size() || B.cols() != pi.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "B must be K x K");
    }
    BiasModel m;
    m.b = B.rowwise().sum();
    m.B = std::move(B);
    if (degenerate(m.b, pi)) {
        throw Error(ErrorCode::DegenerateDirection, "pi^T b is zero; no positive-definite sigma exists");
    }
    m.direction = m.b / pi.dot(m.b);
    return m;
}

BiasModel bd_direction_linear(const CombinedDataset& ds, const Eigen::VectorXd& pi) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    const auto M1 = build_design(ds, DesignModel::PooledSubgroup);
    const Eigen::MatrixXd M2 = ec_bias_block(ds);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M1.values);
    qr.setThreshold(1e-10);
    if (qr.rank() < M1.cols()) {
        throw Error(ErrorCode::RankDeficient, "pooled subgroup design is rank deficient");
    }
    const Eigen::MatrixXd coef = qr.solve(M2);
    return bias_model_from_matrix(coef.middleRows(K, K), pi);
}

Eigen::MatrixXd solve_sigma_from_b(const Eigen::VectorXd& b, const Eigen::VectorXd& pi) {
    if (b.size() != pi.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "b and pi lengths differ");
    }
    if (degenerate(b, pi)) {
        throw Error(ErrorCode::DegenerateDirection, "pi^T b is zero; no positive-definite sigma exists");
    }
    if ((b.array() > 0.0).all() || (b.array() < 0.0).all()) {
        return (b.cwiseAbs().cwiseQuotient(pi)).asDiagonal();
    }
    const auto K = b.size();
    const Eigen::VectorXd v = pi.dot(b) > 0.0 ? b : Eigen::VectorXd(-b);
    const double s = v.dot(pi);
    const double alpha = v.squaredNorm() / s;
    Eigen::MatrixXd sigma = v * v.transpose() / s +
                            alpha * (Eigen::MatrixXd::Identity(K, K) - pi * pi.transpose() / pi.squaredNorm());
    sigma = 0.5 * (sigma + sigma.transpose());
    check_sigma(sigma);
    return sigma;
}

BiasVariance analytic_bias_variance(const DesignCounts& dc, const Eigen::VectorXd& gamma,
                                    const Eigen::MatrixXd& sigma, const Lambda& lambda, double phi2) {
    const auto K = dc.pi.size();
    if (gamma.size() != K || sigma.rows() != K || sigma.cols() != K) {
        throw Error(ErrorCode::InconsistentDimensions, "gamma and sigma must match K");
    }
    if ((dc.n_rct.array() <= 0.0).any()) {
        throw Error(ErrorCode::InvalidDesign, "every RCT subgroup arm needs at least one patient");
    }
    if (!(phi2 >= 0.0)) throw Error(ErrorCode::InvalidDesign, "phi2 must be non-negative");

    const Eigen::MatrixXd P = harmonization_operator(dc.pi, sigma, lambda);
    const Eigen::VectorXd initial_bias = -dc.Q.cwiseProduct(gamma);

    BiasVariance out;
    out.bias = P.leftCols(K) * initial_bias;

    // Linear map from the 3K independent cell means (treated, RCT control, EC) to
    // (initial subgroup estimates, RCT overall estimate).
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K + 1, 3 * K);
    Eigen::VectorXd cell_var(3 * K);
    const double n1 = dc.n_rct_arm(1);
    const double n0 = dc.n_rct_arm(0);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double q = dc.Q(k);
        A(k, k) = 1.0;
        A(k, K + k) = -(1.0 - q);
        A(k, 2 * K + k) = -q;
        A(K, k) = dc.n_rct(k, 1) / n1;
        A(K, K + k) = -dc.n_rct(k, 0) / n0;
        cell_var(k) = phi2 / dc.n_rct(k, 1);
        cell_var(K + k) = phi2 / dc.n_rct(k, 0);
        cell_var(2 * K + k) = dc.n_ec(k) > 0.0 ? phi2 / dc.n_ec(k) : 0.0;
    }
    const Eigen::MatrixXd L = P * A;
    out.variance = L * cell_var.asDiagonal() * L.transpose();
    out.variance = 0.5 * (out.variance + out.variance.transpose());
    return out;
}

Eigen::VectorXd mse_difference(const DesignCounts& dc, const Eigen::VectorXd& gamma, double phi2) {
    const auto K = dc.pi.size();
    if (gamma.size() != K) throw Error(ErrorCode::InconsistentDimensions, "gamma must have length K");
    const double n0 = dc.n_rct_arm(0);
    const double weight = dc.pi.dot(dc.Q);
    if (!(n0 > 0.0) || !(weight > 0.0)) {
        throw Error(ErrorCode::InvalidDesign, "needs RCT controls and a positive EC share");
    }
    const double gamma_bar = dc.pi.cwiseProduct(dc.Q).dot(gamma) / weight;
    Eigen::VectorXd diff(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double q2 = dc.Q(k) * dc.Q(k);
        const double centred = gamma(k) - gamma_bar;
        diff(k) = q2 * (gamma(k) * gamma(k) - centred * centred) - q2 * phi2 / (n0 * weight);
    }
    return diff;
}

Eigen::MatrixXd vd_sigma(const EffectEstimate& initial) {
    if (!initial.covariance) {
        throw Error(ErrorCode::MissingCovariance, "initial estimate has no covariance for VD");
    }
    const Eigen::MatrixXd& S = *initial.covariance;
    if (S.rows() != S.cols() || S.rows() != initial.theta.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "covariance must be K x K");
    }
    const auto K = S.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
    // The trace-based floor alone can sit below the conditioning threshold of
    // check_sigma, so the floor is lifted just above it.
    const double floor = std::max(1e-10 * S.trace() / static_cast<double>(K),
                                  1.01e-10 * eig.eigenvalues().maxCoeff());
    if (!(floor > 0.0)) {
        throw Error(ErrorCode::SingularSigma, "covariance has non-positive trace");
    }
    if (eig.eigenvalues().minCoeff() >= floor) return S;
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd bd_sigma_diff_means(const DesignCounts& dc) {
    Eigen::MatrixXd sigma = dc.Q.cwiseQuotient(dc.pi).asDiagonal();
    check_sigma(sigma);
    return sigma;
}

}  // namespace harmony
