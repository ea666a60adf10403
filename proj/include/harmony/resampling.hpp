#pragma once

#include "harmony/data.hpp"
#include "harmony/monte_carlo.hpp"
#include "harmony/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace harmony {

/// In-silico trials built from a trial control pool and an EC pool. Both RCT arms are
/// drawn with replacement from the trial controls, so the true effects are zero unless
/// a spike is added.
struct ResamplingOptions {
    std::size_t n_control = 100;
    std::size_t n_experimental = 200;
    std::size_t n_ec = 600;
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    /// Recompute pi from each resampled trial; otherwise use the trial pool prevalences.
    bool per_replicate_pi = true;
    /// Per-subgroup response-rate increase in the experimental arm.
    std::optional<Eigen::VectorXd> spike;
    std::vector<Lambda> lambdas{Lambda::full()};
    std::vector<SigmaMode> sigma_modes{SigmaMode::BiasDirected};
    OverallSource overall = OverallSource::DiffMeans;
};

/// Raises the response rate of `arm` in subgroup k by increase_k in expectation, flipping
/// each 0 to 1 with probability increase_k / (1 - base_rate_k). Throws InvalidEffect when
/// an increase is negative or pushes the rate above one.
std::vector<SubjectRecord> spike_effect(std::vector<SubjectRecord> arm, const Eigen::VectorXd& increase,
                                        const Eigen::VectorXd& base_rate, Philox4x32& gen);

/// Control response rate per subgroup in the pool's RCT rows.
Eigen::VectorXd pool_response_rates(const CombinedDataset& pools);

/// One resampled trial. `pools.rct` supplies the control pool (rows with T = 0) and
/// `pools.ec` the external controls.
CombinedDataset resample_trial(const CombinedDataset& pools, const ResamplingOptions& options,
                               std::uint32_t replicate);

/// Pooled logistic, IPW logistic, harmonised IPW and RCT-only logistic estimators over
/// `options.reps` resampled trials, reported against the spiked (default zero) effects.
MonteCarloReport run_resampling(const CombinedDataset& pools, const ResamplingOptions& options);

/// Synthetic stand-in for a trial control pool (352 patients) and an EC pool (532)
/// with K = 4 subgroups, two covariates, a covariate shift and a logit shift of -0.5
/// in the EC outcomes.
CombinedDataset gbm_like_pools(std::uint64_t seed);

}  // namespace harmony
