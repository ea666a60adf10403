#pragma once

#include "harmony/data.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace harmony {

/// Normal prior for a conjugate linear model. `flat` selects the improper uniform prior,
/// in which case mean and covariance are ignored.
struct NormalPrior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    bool flat = false;

    static NormalPrior flat_prior(Eigen::Index p);
    /// N(mean, variance * I); the zero mean when `mean` is empty.
    static NormalPrior diagonal(Eigen::Index p, double variance, Eigen::VectorXd mean = {});
};

struct NormalPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    std::vector<std::string> labels;
};

/// Posterior for y = X b + N(0, noise_var) under the given prior.
NormalPosterior conjugate_update(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise_var,
                                 const NormalPrior& prior);

/// Analyst 1: (mu, theta) from RCT rows, ignoring subgroups.
NormalPosterior analyst1_posterior(const CombinedDataset& ds, const NormalPrior& prior, double sigma2);

/// Analyst 2: (mu_{1:K}, theta_{1:K}) from RCT and EC rows, EC rows informing mu only.
NormalPosterior analyst2_posterior(const CombinedDataset& ds, const NormalPrior& prior, double phi2);

/// theta_{1:K} under Analyst 1's marginal for theta combined with Analyst 2's conditional.
NormalPosterior cut_distribution(const NormalPosterior& a1, const NormalPosterior& a2,
                                 const Eigen::VectorXd& pi);

/// Analyst 2's conditional given pi^T theta_{1:K} = theta_a1.
NormalPosterior plug_in_distribution(const NormalPosterior& a2, const Eigen::VectorXd& pi, double theta_a1);

}  // namespace harmony
