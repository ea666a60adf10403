#pragma once

#include "harmony/data.hpp"
#include "harmony/effect.hpp"
#include "harmony/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>

namespace harmony {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Penalty weight on the coherence term. FULL is lambda = infinity and is never
/// represented by a large float.
class Lambda {
public:
    static Lambda full() { return Lambda(true, 0.0); }
    static Lambda finite(double value) {
        if (!(value >= 0.0) || !std::isfinite(value)) {
            throw Error(ErrorCode::ConfigError, "lambda must be a finite non-negative number or FULL");
        }
        return Lambda(false, value);
    }

    bool is_full() const { return full_; }
    double value() const { return value_; }
    bool is_zero() const { return !full_ && value_ == 0.0; }

    /// lambda / (lambda + c), equal to one at FULL.
    template <typename Scalar>
    Scalar shrinkage(Scalar c) const {
        if (full_) return Scalar(1);
        return Scalar(value_) / (Scalar(value_) + c);
    }

    std::string to_string() const;
    bool operator==(const Lambda&) const = default;

private:
    Lambda(bool full, double value) : full_(full), value_(value) {}
    bool full_;
    double value_;
};

enum class SigmaMode { Fixed, BiasDirected, VarianceDirected };
std::string_view to_string(SigmaMode mode) noexcept;

struct HarmonizationConfig {
    Lambda lambda = Lambda::full();
    Eigen::MatrixXd sigma;
    SigmaMode mode = SigmaMode::Fixed;
    /// Shortcut for FULL: shift along u with pi^T u = 1, bypassing sigma.
    std::optional<Eigen::VectorXd> direction;

    /// Throws SingularSigma / InconsistentDimensions / DegenerateDirection.
    void validate(const Eigen::VectorXd& pi) const;
};

/// Symmetric with smallest eigenvalue above 1e-10 times the largest.
template <typename Derived>
void check_sigma(const Eigen::MatrixBase<Derived>& sigma) {
    using Scalar = typename Derived::Scalar;
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
        throw Error(ErrorCode::InconsistentDimensions, "sigma must be square and non-empty");
    }
    const Scalar scale = sigma.cwiseAbs().maxCoeff();
    if (!(scale > Scalar(0)) || !sigma.allFinite()) {
        throw Error(ErrorCode::SingularSigma, "sigma is zero or non-finite");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
        throw Error(ErrorCode::SingularSigma, "sigma is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(sigma.eval(), Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    if (!(ev(0) > Scalar(1e-10) * ev(ev.size() - 1))) {
        throw Error(ErrorCode::SingularSigma, "sigma is not positive definite");
    }
}

/// Shift direction at FULL: u = Sigma pi / (pi^T Sigma pi).
template <typename DerivedS, typename DerivedP>
Vector<typename DerivedS::Scalar> full_direction(const Eigen::MatrixBase<DerivedS>& sigma,
                                                 const Eigen::MatrixBase<DerivedP>& pi) {
    const Vector<typename DerivedS::Scalar> sp = sigma * pi;
    return sp / pi.dot(sp);
}

/// initial + (overall - pi^T initial) u.
template <typename DerivedT, typename DerivedP, typename DerivedU>
Vector<typename DerivedT::Scalar> harmonize_along(const Eigen::MatrixBase<DerivedT>& initial,
                                                  typename DerivedT::Scalar overall,
                                                  const Eigen::MatrixBase<DerivedP>& pi,
                                                  const Eigen::MatrixBase<DerivedU>& u) {
    const auto gap = overall - pi.dot(initial);
    return initial + gap * u;
}

/// Minimiser of (v - initial)^T Sigma^{-1} (v - initial) + lambda (pi^T v - overall)^2,
/// via the rank-one shift form initial + c lambda/(lambda + c) (overall - pi^T initial) Sigma pi
/// with c = 1 / (pi^T Sigma pi). Returns `initial` unchanged when lambda = 0.
template <typename DerivedT, typename DerivedP, typename DerivedS>
Vector<typename DerivedT::Scalar> harmonize_vector(const Eigen::MatrixBase<DerivedT>& initial,
                                                   typename DerivedT::Scalar overall,
                                                   const Eigen::MatrixBase<DerivedP>& pi,
                                                   const Eigen::MatrixBase<DerivedS>& sigma,
                                                   const Lambda& lambda) {
    using Scalar = typename DerivedT::Scalar;
    if (initial.size() != pi.size() || sigma.rows() != pi.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "initial, pi and sigma sizes differ");
    }
    if (lambda.is_zero()) return initial;
    const Vector<Scalar> sp = sigma * pi;
    const Scalar c = Scalar(1) / pi.dot(sp);
    const Scalar scale = lambda.shrinkage(c) * c;
    return initial + (scale * (overall - pi.dot(initial))) * sp;
}

/// Linear map P = [I - u pi^T, u] taking (initial, overall) to the harmonised vector,
/// with u = c lambda/(lambda + c) Sigma pi.
template <typename DerivedP, typename DerivedS>
Matrix<typename DerivedS::Scalar> harmonization_operator(const Eigen::MatrixBase<DerivedP>& pi,
                                                         const Eigen::MatrixBase<DerivedS>& sigma,
                                                         const Lambda& lambda) {
    using Scalar = typename DerivedS::Scalar;
    const auto K = pi.size();
    const Vector<Scalar> sp = sigma * pi;
    const Scalar c = Scalar(1) / pi.dot(sp);
    const Vector<Scalar> u = lambda.is_zero() ? Vector<Scalar>(Vector<Scalar>::Zero(K))
                                              : Vector<Scalar>(lambda.shrinkage(c) * c * sp);
    Matrix<Scalar> P(K, K + 1);
    P.leftCols(K) = Matrix<Scalar>::Identity(K, K) - u * pi.transpose();
    P.col(K) = u;
    return P;
}

/// Harmonises `initial.theta` towards `overall.theta_overall`. When `joint_covariance`
/// ((K+1) x (K+1), initial then overall) is given, the output carries P S P^T.
EffectEstimate harmonize(const EffectEstimate& initial, const EffectEstimate& overall,
                         const Eigen::VectorXd& pi, const HarmonizationConfig& cfg,
                         const std::optional<Eigen::MatrixXd>& joint_covariance = std::nullopt);

/// Sensitivity of the initial estimator to the EC distortion vector, plus BD direction.
struct BiasModel {
    Eigen::MatrixXd B;
    Eigen::VectorXd b;          // B * 1
    Eigen::VectorXd direction;  // b / (pi^T b)
};

/// B = [0, I_K, 0] (M_1^T M_1)^{-1} M_1^T M_2 from the designs alone.
BiasModel bd_direction_linear(const CombinedDataset& ds, const Eigen::VectorXd& pi);

/// Completes a BiasModel from B: b = B 1 and u = b / (pi^T b).
BiasModel bias_model_from_matrix(Eigen::MatrixXd B, const Eigen::VectorXd& pi);

/// Positive-definite Sigma with Sigma pi = kappa b. Uses diag(|b_k| / pi_k) when the
/// entries of b share a sign, otherwise v v^T / (v^T pi) + alpha (I - pi pi^T / pi^T pi)
/// with v = sign(pi^T b) b.
Eigen::MatrixXd solve_sigma_from_b(const Eigen::VectorXd& b, const Eigen::VectorXd& pi);

struct BiasVariance {
    Eigen::VectorXd bias;
    Eigen::MatrixXd variance;
};

/// Exact bias and covariance of the diff-of-means harmonised estimator under the
/// normal subgroup model with distortion gamma (stratified, equal-ratio designs).
BiasVariance analytic_bias_variance(const DesignCounts& dc, const Eigen::VectorXd& gamma,
                                    const Eigen::MatrixXd& sigma, const Lambda& lambda, double phi2);

/// Bias and covariance of the pooled diff-of-means estimator (lambda = 0 case).
inline BiasVariance pooled_bias_variance(const DesignCounts& dc, const Eigen::VectorXd& gamma,
                                         double phi2) {
    return analytic_bias_variance(dc, gamma,
                                  Eigen::MatrixXd::Identity(gamma.size(), gamma.size()),
                                  Lambda::finite(0.0), phi2);
}

/// MSE(pooled) - MSE(BD harmonised, FULL) per subgroup.
Eigen::VectorXd mse_difference(const DesignCounts& dc, const Eigen::VectorXd& gamma, double phi2);

/// Covariance of the initial estimate, eigenvalue-floored at 1e-10 * trace / K (raised to
/// 1.01e-10 times the largest eigenvalue when that is higher, so the result passes check_sigma).
Eigen::MatrixXd vd_sigma(const EffectEstimate& initial);

/// Sigma = diag(Q_kk / pi_k): BD choice for the diff-of-means estimator.
Eigen::MatrixXd bd_sigma_diff_means(const DesignCounts& dc);

}  // namespace harmony
