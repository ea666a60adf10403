#include "harmony/resampling.hpp"

#include "harmony/error.hpp"
#include "harmony/glm.hpp"
#include "harmony/parallel.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <numeric>

namespace harmony {

std::vector<SubjectRecord> spike_effect(std::vector<SubjectRecord> arm, const Eigen::VectorXd& increase,
                                        const Eigen::VectorXd& base_rate, Philox4x32& gen) {
    if (increase.size() != base_rate.size()) {
        throw Error(ErrorCode::InconsistentDimensions, "spike and base rates need one entry per subgroup");
    }
    Eigen::VectorXd flip(increase.size());
    for (Eigen::Index k = 0; k < increase.size(); ++k) {
        const double target = base_rate(k) + increase(k);
        if (!(increase(k) >= 0.0) || target > 1.0 + 1e-12) {
            throw Error(ErrorCode::InvalidEffect, "spike in subgroup " + std::to_string(k + 1) +
                                                      " gives a response rate of " + std::to_string(target));
        }
        flip(k) = increase(k) == 0.0 ? 0.0 : std::min(1.0, increase(k) / (1.0 - base_rate(k)));
    }
    for (auto& r : arm) {
        if (r.outcome != 0.0 && r.outcome != 1.0) {
            throw Error(ErrorCode::InvalidEffect, "spiking needs binary outcomes");
        }
        const auto k = static_cast<Eigen::Index>(r.subgroup);
        if (k >= flip.size()) throw Error(ErrorCode::InconsistentDimensions, "record subgroup outside the spike");
        if (r.outcome == 0.0 && flip(k) > 0.0 && boost::random::bernoulli_distribution<double>(flip(k))(gen)) {
            r.outcome = 1.0;
        }
    }
    return arm;
}

namespace {

std::vector<std::size_t> control_rows(const CombinedDataset& pools) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pools.rct.size(); ++i) {
        if (pools.rct[i].treatment == 0) rows.push_back(i);
    }
    return rows;
}

void check_pools(const CombinedDataset& pools, const ResamplingOptions& o) {
    if (o.n_control == 0 || o.n_experimental == 0) {
        throw Error(ErrorCode::ConfigError, "both resampled arms need patients");
    }
    if (o.reps < 2) throw Error(ErrorCode::ConfigError, "reps must be at least 2");
    if (pools.family != OutcomeFamily::Binary) throw Error(ErrorCode::ConfigError, "resampling needs binary outcomes");
    const auto controls = control_rows(pools);
    if (controls.empty()) throw Error(ErrorCode::PoolTooSmall, "the trial pool has no control patients");
    if (o.n_ec > 0 && pools.ec.empty()) throw Error(ErrorCode::PoolTooSmall, "the EC pool is empty");
    std::vector<bool> seen(pools.K, false);
    for (auto i : controls) seen[pools.rct[i].subgroup] = true;
    std::vector<bool> seen_ec(pools.K, o.n_ec == 0);
    for (const auto& r : pools.ec) seen_ec[r.subgroup] = true;
    for (std::size_t k = 0; k < pools.K; ++k) {
        if (!seen[k]) {
            throw Error(ErrorCode::PoolTooSmall, "the trial control pool has no patients in subgroup " +
                                                     pools.subgroup_labels[k]);
        }
        if (!seen_ec[k]) {
            throw Error(ErrorCode::PoolTooSmall, "the EC pool has no patients in subgroup " + pools.subgroup_labels[k]);
        }
    }
}

}  // namespace

Eigen::VectorXd pool_response_rates(const CombinedDataset& pools) {
    Eigen::VectorXd n = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pools.K)), y = n;
    for (const auto& r : pools.rct) {
        if (r.treatment != 0) continue;
        n(static_cast<Eigen::Index>(r.subgroup)) += 1.0;
        y(static_cast<Eigen::Index>(r.subgroup)) += r.outcome;
    }
    return y.cwiseQuotient(n.cwiseMax(1.0));
}

CombinedDataset resample_trial(const CombinedDataset& pools, const ResamplingOptions& o, std::uint32_t replicate) {
    const auto controls = control_rows(pools);
    CombinedDataset ds;
    ds.K = pools.K;
    ds.d = pools.d;
    ds.family = pools.family;
    ds.subgroup_labels = pools.subgroup_labels;
    Philox4x32 gen(o.seed, replicate, StreamRole::Resample);
    boost::random::uniform_int_distribution<std::size_t> pick_rct(0, controls.size() - 1);
    ds.rct.reserve(o.n_control + o.n_experimental);
    for (std::size_t i = 0; i < o.n_control + o.n_experimental; ++i) {
        SubjectRecord r = pools.rct[controls[pick_rct(gen)]];
        r.treatment = i < o.n_control ? 0 : 1;
        ds.rct.push_back(std::move(r));
    }
    if (o.n_ec > 0) {
        boost::random::uniform_int_distribution<std::size_t> pick_ec(0, pools.ec.size() - 1);
        ds.ec.reserve(o.n_ec);
        for (std::size_t i = 0; i < o.n_ec; ++i) ds.ec.push_back(pools.ec[pick_ec(gen)]);
    }
    if (o.spike) {
        Philox4x32 spike_gen(o.seed, replicate, StreamRole::Spike);
        std::vector<SubjectRecord> arm(ds.rct.begin() + static_cast<std::ptrdiff_t>(o.n_control), ds.rct.end());
        arm = spike_effect(std::move(arm), *o.spike, pool_response_rates(pools), spike_gen);
        std::copy(arm.begin(), arm.end(), ds.rct.begin() + static_cast<std::ptrdiff_t>(o.n_control));
    }
    return ds;
}

MonteCarloReport run_resampling(const CombinedDataset& pools, const ResamplingOptions& o) {
    check_pools(pools, o);
    const auto K = static_cast<Eigen::Index>(pools.K);
    if (o.spike && o.spike->size() != K) {
        throw Error(ErrorCode::ConfigError, "spike needs one entry per subgroup");
    }
    MonteCarloOptions mc;
    mc.pipeline = PipelineKind::Logistic;
    mc.harmonized = false;
    mc.ipw = true;
    mc.lambdas = o.lambdas;
    mc.sigma_modes = o.sigma_modes;
    mc.overall = o.overall;
    mc.reps = o.reps;
    mc.seed = o.seed;
    mc.workers = o.workers;
    mc.validate();

    std::optional<Eigen::VectorXd> pi;
    if (!o.per_replicate_pi) {
        CombinedDataset controls = pools.rct_only();
        std::erase_if(controls.rct, [](const SubjectRecord& r) { return r.treatment != 0; });
        pi = empirical_prevalence(controls);
    }
    // Reorder so the output lists the four comparison estimators as pooled, ipw,
    // harmonised IPW, RCT-only.
    const auto names = estimator_names(mc);
    std::vector<std::size_t> order;
    std::vector<std::string> ordered;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] != "rct_only") order.push_back(i);
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "rct_only") order.push_back(i);
    }
    for (auto i : order) ordered.push_back(names[i]);

    std::vector<std::optional<ReplicateEstimates>> results(o.reps);
    std::vector<std::optional<FailureRecord>> failed(o.reps);
    parallel_for(o.reps, o.workers, [&](std::size_t r) {
        try {
            const auto ds = resample_trial(pools, o, static_cast<std::uint32_t>(r));
            auto est = run_estimators(ds, mc, pi, std::nullopt, 0);
            ReplicateEstimates sorted;
            for (auto i : order) sorted.estimates.push_back(std::move(est.estimates[i]));
            results[r] = std::move(sorted);
        } catch (const Error& e) {
            if (e.kind() == ErrorClass::Config) throw ReplicateError(r, e.code(), e.what());
            failed[r] = FailureRecord{r, e.code(), e.what()};
        }
    });
    std::vector<FailureRecord> failures;
    for (auto& f : failed) {
        if (f) failures.push_back(std::move(*f));
    }
    const Eigen::VectorXd truth = o.spike ? *o.spike : Eigen::VectorXd::Zero(K);
    auto report = summarize(ordered, results, failures, truth);
    report.scenario = "resampling";
    report.seed = o.seed;
    report.subgroup_labels = pools.subgroup_labels;
    report.notes.emplace_back("pipeline", "logistic");
    report.notes.emplace_back("prevalence", o.per_replicate_pi ? "per-replicate RCT empirical" : "trial pool");
    report.notes.emplace_back("overall_estimator", o.overall == OverallSource::DiffMeans ? "diff_means" : "model");
    return report;
}

CombinedDataset gbm_like_pools(std::uint64_t seed) {
    const Eigen::Vector4d trial_prev(0.20, 0.47, 0.10, 0.23), ec_prev(0.27, 0.30, 0.19, 0.24);
    const Eigen::Vector4d nu(-0.5, 0.2, -0.3, 0.4);
    const Eigen::Vector2d beta(0.4, -0.3);
    const Eigen::Vector2d trial_x(0.0, 0.0), ec_x(0.5, -0.3);
    const double delta = -0.5;

    // Largest-remainder rounding so the counts add up exactly.
    auto counts = [](const Eigen::Vector4d& prev, int n) {
        std::vector<int> c(4);
        std::vector<std::pair<double, int>> rem;
        int total = 0;
        for (int k = 0; k < 4; ++k) {
            c[k] = static_cast<int>(std::floor(prev(k) * n));
            total += c[k];
            rem.emplace_back(prev(k) * n - c[k], k);
        }
        std::sort(rem.begin(), rem.end(), std::greater<>());
        for (int i = 0; total < n; ++i, ++total) ++c[rem[static_cast<std::size_t>(i)].second];
        return c;
    };

    CombinedDataset ds;
    ds.K = 4;
    ds.d = 2;
    ds.family = OutcomeFamily::Binary;
    ds.subgroup_labels = {"1", "2", "3", "4"};
    Philox4x32 gen(seed, 0, StreamRole::Covariates);
    boost::random::normal_distribution<double> z;
    auto add = [&](std::vector<SubjectRecord>& rows, const std::vector<int>& c, const Eigen::Vector2d& x_mean,
                   double shift, Study study) {
        for (int k = 0; k < 4; ++k) {
            for (int i = 0; i < c[static_cast<std::size_t>(k)]; ++i) {
                SubjectRecord r;
                r.subgroup = static_cast<std::size_t>(k);
                r.study = study;
                r.covariates = Eigen::Vector2d(x_mean(0) + z(gen), x_mean(1) + z(gen));
                const double p = expit(nu(k) + shift + beta.dot(r.covariates));
                r.outcome = boost::random::bernoulli_distribution<double>(p)(gen) ? 1.0 : 0.0;
                rows.push_back(std::move(r));
            }
        }
    };
    add(ds.rct, counts(trial_prev, 352), trial_x, 0.0, Study::Rct);
    add(ds.ec, counts(ec_prev, 532), ec_x, delta, Study::Ec);
    return ds;
}

}  // namespace harmony
