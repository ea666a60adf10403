#pragma once

#include "harmony/bayes_cut.hpp"
#include "harmony/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string_view>

namespace harmony {

enum class IntervalMethod { Analytic, Cut, Bootstrap, RctOnly };
std::string_view to_string(IntervalMethod method) noexcept;

struct IntervalSet {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    IntervalMethod method = IntervalMethod::Analytic;
    double alpha = 0.05;

    Eigen::VectorXd width() const { return upper - lower; }
    bool covers(Eigen::Index k, double value) const { return lower(k) <= value && value <= upper(k); }
};

/// z_{p} of the standard normal.
double normal_quantile(double p);

/// theta_k -+ z_{1-alpha/2} sqrt(V_kk). Negative diagonals beyond rounding raise NegativeVariance.
IntervalSet analytic_interval(const Eigen::VectorXd& theta, const Eigen::MatrixXd& covariance, double alpha);

/// Centred at `theta` (the harmonised estimate) with the cut-distribution variances.
IntervalSet cut_interval(const Eigen::VectorXd& theta, const NormalPosterior& cut, double alpha);

/// Per-subgroup RCT difference of means with unequal arm variances.
IntervalSet rct_only_interval(const CombinedDataset& ds, double alpha);

/// Parameters of the normal subgroup model used to regenerate outcomes.
struct SimpleModelParams {
    Eigen::VectorXd mu;     // control means
    Eigen::VectorXd theta;  // treatment effects
    Eigen::VectorXd gamma;  // EC distortions
    double phi2 = 1.0;
};

/// Method-of-moments fit: RCT control means, RCT mean differences, EC minus RCT control
/// means (zero for subgroups without EC), and the pooled within-cell variance.
SimpleModelParams fit_simple_model(const CombinedDataset& ds);

/// Linear-interpolation (type 7) sample quantile; `values` is sorted in place.
double type7_quantile(std::vector<double>& values, double p);

using EstimatePipeline = std::function<Eigen::VectorXd(const CombinedDataset&)>;

/// Parametric bootstrap: R datasets with the observed design and outcomes drawn from
/// `params`, each passed through `pipeline`. The interval is centred at pipeline(ds)
/// with half-width (G^{-1}(1 - alpha/2) - G^{-1}(alpha/2)) / 2.
IntervalSet bootstrap_interval(const CombinedDataset& ds, const EstimatePipeline& pipeline,
                               const SimpleModelParams& params, std::size_t R, double alpha,
                               std::uint64_t seed, std::size_t workers = 1);

}  // namespace harmony
