#include "harmony/monte_carlo.hpp"

#include "harmony/bayes_cut.hpp"
#include "harmony/estimators.hpp"
#include "harmony/glm.hpp"
#include "harmony/limit_map.hpp"
#include "harmony/parallel.hpp"
#include "harmony/rng.hpp"

#include <algorithm>
#include <cmath>

namespace harmony {

std::string_view to_string(PipelineKind kind) noexcept {
    switch (kind) {
        case PipelineKind::DiffMeans: return "diff_means";
        case PipelineKind::Linear: return "linear";
        case PipelineKind::Logistic: return "logistic";
    }
    return "unknown";
}

void MonteCarloOptions::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (reps < 2) fail("reps must be at least 2");
    if (workers < 1) fail("workers must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
    if (!(cut_prior_variance >= 0.0)) fail("cut prior variance must be non-negative");
    const bool linear = pipeline != PipelineKind::Logistic;
    if (!intervals.empty() && !linear) fail("intervals need an estimator that is linear in the outcomes");
    for (auto m : intervals) {
        if ((m == IntervalMethod::Cut || m == IntervalMethod::Bootstrap || m == IntervalMethod::RctOnly) &&
            pipeline != PipelineKind::DiffMeans) {
            fail(std::string(to_string(m)) + " intervals need the diff_means pipeline");
        }
    }
    if (std::find(intervals.begin(), intervals.end(), IntervalMethod::Bootstrap) != intervals.end() &&
        bootstrap_reps < 100) {
        fail("bootstrap needs at least 100 replicates");
    }
    if (cut && pipeline == PipelineKind::Logistic) fail("the cut estimator needs a normal pipeline");
    if (ipw && pipeline != PipelineKind::Logistic) fail("IPW estimators need the logistic pipeline");
    if (oracle && pipeline != PipelineKind::DiffMeans) fail("the oracle estimator needs the diff_means pipeline");
}

const EstimatorReport& MonteCarloReport::estimator(const std::string& name) const {
    for (const auto& e : estimators) {
        if (e.name == name) return e;
    }
    throw Error(ErrorCode::ConfigError, "no estimator named " + name);
}

const IntervalReport& MonteCarloReport::interval(const std::string& name, IntervalMethod method) const {
    for (const auto& i : intervals) {
        if (i.estimator == name && i.method == method) return i;
    }
    throw Error(ErrorCode::ConfigError, "no " + std::string(to_string(method)) + " interval for " + name);
}

namespace {

std::string harmonized_name(const std::string& prefix, SigmaMode mode, const Lambda& lambda) {
    return prefix + "_" + std::string(to_string(mode)) + "_" + lambda.to_string();
}

/// Everything the harmonised estimators of one pipeline share.
struct Initial {
    EffectEstimate subgroup;
    EffectEstimate overall;
    std::optional<Eigen::MatrixXd> joint;  // (K+1) x (K+1) for linear pipelines
    std::optional<LimitMapSpec> limit_map;
};

Eigen::MatrixXd sigma_for(SigmaMode mode, const CombinedDataset& ds, const Initial& init,
                          const Eigen::VectorXd& pi, PipelineKind kind) {
    const auto K = pi.size();
    switch (mode) {
        case SigmaMode::Fixed: return Eigen::MatrixXd::Identity(K, K);
        case SigmaMode::VarianceDirected: return vd_sigma(init.subgroup);
        case SigmaMode::BiasDirected:
            switch (kind) {
                case PipelineKind::DiffMeans: return bd_sigma_diff_means(compute_design_counts(ds, pi));
                case PipelineKind::Linear: return solve_sigma_from_b(bd_direction_linear(ds, pi).b, pi);
                case PipelineKind::Logistic: return solve_sigma_from_b(bd_direction_glm(*init.limit_map, pi).b, pi);
            }
    }
    throw Error(ErrorCode::ConfigError, "unknown sigma mode");
}

Initial linear_initial(const CombinedDataset& ds, const MonteCarloOptions& o) {
    Initial init;
    init.overall = overall_effect(ds, o);
    LinearPair w;
    double phi2 = 0.0;
    if (o.pipeline == PipelineKind::DiffMeans) {
        init.subgroup = diff_means_pooled_subgroups(ds);
        w = diff_means_weights(ds);
        phi2 = pooled_cell_variance(ds);
    } else {
        init.subgroup = ols_subgroup_effects(ds);
        w = ols_weights(ds);
        phi2 = fit_ols(build_design(ds, DesignModel::PooledSubgroup),
                       stacked_outcomes(ds, DesignModel::PooledSubgroup))
                   .dispersion;
    }
    if (o.overall == OverallSource::DiffMeans) {
        w.overall_weights = diff_means_weights(ds).overall_weights;
    } else if (o.pipeline == PipelineKind::DiffMeans) {
        w.overall_weights = ols_weights(ds).overall_weights;
    }
    init.joint = joint_covariance(w, phi2);
    const auto K = init.subgroup.K();
    init.subgroup.covariance = init.joint->topLeftCorner(K, K);
    return init;
}

Eigen::VectorXd harmonized_theta(const CombinedDataset& ds, const MonteCarloOptions& o, const Eigen::VectorXd& pi,
                                 SigmaMode mode, const Lambda& lambda) {
    const Initial init = linear_initial(ds, o);
    HarmonizationConfig cfg;
    cfg.lambda = lambda;
    cfg.sigma = sigma_for(mode, ds, init, pi, o.pipeline);
    return harmonize(init.subgroup, init.overall, pi, cfg).theta;
}

bool wants(const MonteCarloOptions& o, IntervalMethod m) {
    return std::find(o.intervals.begin(), o.intervals.end(), m) != o.intervals.end();
}

}  // namespace

EffectEstimate overall_effect(const CombinedDataset& ds, const MonteCarloOptions& o) {
    if (o.overall == OverallSource::DiffMeans) return diff_means_overall(ds);
    return o.pipeline == PipelineKind::Logistic ? logistic_overall_rct(ds) : ols_overall_effect(ds);
}

std::vector<std::string> estimator_names(const MonteCarloOptions& o) {
    std::vector<std::string> names;
    if (o.pooled) names.push_back("pooled");
    if (o.rct_only) names.push_back("rct_only");
    if (o.oracle) names.push_back("oracle");
    if (o.harmonized) {
        for (auto mode : o.sigma_modes) {
            for (const auto& lambda : o.lambdas) names.push_back(harmonized_name("harmonized", mode, lambda));
        }
    }
    if (o.cut) names.push_back("cut");
    if (o.ipw) {
        names.push_back("ipw");
        for (auto mode : o.sigma_modes) {
            for (const auto& lambda : o.lambdas) names.push_back(harmonized_name("harmonized_ipw", mode, lambda));
        }
    }
    return names;
}

ReplicateEstimates run_estimators(const CombinedDataset& ds, const MonteCarloOptions& o,
                                  const std::optional<Eigen::VectorXd>& pi_opt,
                                  const std::optional<Eigen::VectorXd>& mu_true, std::uint64_t bootstrap_seed) {
    const Eigen::VectorXd pi = compute_design_counts(ds, pi_opt).pi;
    ReplicateEstimates out;

    Initial init;
    if (o.pipeline == PipelineKind::Logistic) {
        init.subgroup = logistic_marginal_effects(ds);
        init.overall = overall_effect(ds, o);
        if (o.harmonized && std::find(o.sigma_modes.begin(), o.sigma_modes.end(), SigmaMode::BiasDirected) !=
                                o.sigma_modes.end()) {
            init.limit_map = make_limit_map(ds);
        }
    } else {
        init = linear_initial(ds, o);
    }

    if (o.pooled) out.estimates.push_back(init.subgroup.theta);
    if (o.rct_only) {
        const RctModel model = o.pipeline == PipelineKind::DiffMeans ? RctModel::DiffMeans
                               : o.pipeline == PipelineKind::Linear  ? RctModel::Ols
                                                                     : RctModel::Logistic;
        out.estimates.push_back(rct_only_subgroups(ds, model).theta);
        if (wants(o, IntervalMethod::RctOnly)) out.intervals.emplace_back("rct_only", rct_only_interval(ds, o.alpha));
    }
    if (o.oracle) {
        if (!mu_true) throw Error(ErrorCode::ConfigError, "the oracle estimator needs the true control means");
        out.estimates.push_back(oracle_subgroups(ds, *mu_true).theta);
    }

    std::optional<NormalPosterior> cut;
    if (o.cut || wants(o, IntervalMethod::Cut)) {
        if (o.pipeline == PipelineKind::DiffMeans) {
            const double phi2 = pooled_cell_variance(ds);
            const auto K = static_cast<Eigen::Index>(ds.K);
            const bool flat = o.cut_prior_variance == 0.0;
            const auto a1 = analyst1_posterior(
                ds, flat ? NormalPrior::flat_prior(2) : NormalPrior::diagonal(2, o.cut_prior_variance), phi2);
            const auto a2 = analyst2_posterior(
                ds, flat ? NormalPrior::flat_prior(2 * K) : NormalPrior::diagonal(2 * K, o.cut_prior_variance), phi2);
            cut = cut_distribution(a1, a2, pi);
        }
    }
    const SimpleModelParams boot_params =
        wants(o, IntervalMethod::Bootstrap) ? fit_simple_model(ds) : SimpleModelParams{};

    std::uint32_t interval_index = 0;
    for (auto mode : o.harmonized ? o.sigma_modes : std::vector<SigmaMode>{}) {
        HarmonizationConfig cfg;
        cfg.sigma = sigma_for(mode, ds, init, pi, o.pipeline);
        for (const auto& lambda : o.lambdas) {
            cfg.lambda = lambda;
            const auto h = harmonize(init.subgroup, init.overall, pi, cfg, init.joint);
            out.estimates.push_back(h.theta);
            const std::string name = harmonized_name("harmonized", mode, lambda);
            for (auto m : o.intervals) {
                switch (m) {
                    case IntervalMethod::Analytic:
                        out.intervals.emplace_back(name, analytic_interval(h.theta, *h.covariance, o.alpha));
                        break;
                    case IntervalMethod::Cut:
                        out.intervals.emplace_back(name, cut_interval(h.theta, *cut, o.alpha));
                        break;
                    case IntervalMethod::Bootstrap: {
                        const EstimatePipeline pipe = [&, mode, lambda](const CombinedDataset& d) {
                            return harmonized_theta(d, o, pi, mode, lambda);
                        };
                        out.intervals.emplace_back(
                            name, bootstrap_interval(ds, pipe, boot_params, o.bootstrap_reps, o.alpha,
                                                     derive_seed(bootstrap_seed, interval_index), 1));
                        break;
                    }
                    case IntervalMethod::RctOnly: break;
                }
                ++interval_index;
            }
        }
    }

    if (o.cut) {
        if (cut) {
            out.estimates.push_back(cut->mean);
        } else {
            // Linear working model with flat priors: Analyst 1 fits M_0 by OLS and the cut
            // mean is VD harmonisation at FULL.
            HarmonizationConfig cfg;
            cfg.sigma = vd_sigma(init.subgroup);
            out.estimates.push_back(harmonize(init.subgroup, ols_overall_effect(ds), pi, cfg).theta);
        }
    }

    if (o.ipw) {
        PropensityModel pm;
        EffectEstimate ipw = weighted_logistic_effects(ds, &pm);
        out.estimates.push_back(ipw.theta);
        Initial weighted;
        weighted.subgroup = ipw;
        weighted.overall = init.overall;
        if (std::find(o.sigma_modes.begin(), o.sigma_modes.end(), SigmaMode::BiasDirected) != o.sigma_modes.end()) {
            weighted.limit_map = make_limit_map(ds, pm.weights);
        }
        for (auto mode : o.sigma_modes) {
            HarmonizationConfig cfg;
            cfg.sigma = sigma_for(mode, ds, weighted, pi, o.pipeline);
            for (const auto& lambda : o.lambdas) {
                cfg.lambda = lambda;
                out.estimates.push_back(harmonize(ipw, init.overall, pi, cfg).theta);
            }
        }
    }
    return out;
}

MonteCarloReport summarize(const std::vector<std::string>& names,
                           const std::vector<std::optional<ReplicateEstimates>>& results,
                           const std::vector<FailureRecord>& failures, const Eigen::VectorXd& truth) {
    MonteCarloReport rep;
    rep.truth = truth;
    rep.failures = failures;
    rep.reps_requested = results.size();
    for (std::size_t r = 0; r < results.size(); ++r) {
        if (results[r]) rep.replicates_used.push_back(r);
    }
    const auto n = static_cast<Eigen::Index>(rep.replicates_used.size());
    const auto K = truth.size();
    if (n < 2) {
        const auto& f = failures.front();
        throw ReplicateError(f.replicate, f.code, "fewer than two replicates succeeded; first failure: " + f.message);
    }
    const double nd = static_cast<double>(n);

    for (std::size_t e = 0; e < names.size(); ++e) {
        EstimatorReport er;
        er.name = names[e];
        er.estimates.resize(n, K);
        for (Eigen::Index i = 0; i < n; ++i) {
            er.estimates.row(i) = results[rep.replicates_used[static_cast<std::size_t>(i)]]->estimates[e].transpose();
        }
        for (Eigen::Index k = 0; k < K; ++k) {
            const Eigen::ArrayXd err = er.estimates.col(k).array() - truth(k);
            SubgroupMetrics m;
            m.bias = err.mean();
            const Eigen::ArrayXd centred = err - m.bias;
            m.sd = std::sqrt(centred.square().mean());
            const double mse = err.square().mean();
            m.rmse = std::sqrt(mse);
            m.bias_se = m.sd / std::sqrt(nd);
            m.sd_se = m.sd / std::sqrt(2.0 * (nd - 1.0));
            const Eigen::ArrayXd sq = err.square();
            const double mse_se = std::sqrt((sq - mse).square().sum() / (nd - 1.0) / nd);
            m.rmse_se = m.rmse > 0.0 ? mse_se / (2.0 * m.rmse) : 0.0;
            er.metrics.push_back(m);
        }
        rep.estimators.push_back(std::move(er));
    }

    const auto& first = *results[rep.replicates_used.front()];
    for (std::size_t j = 0; j < first.intervals.size(); ++j) {
        IntervalReport ir;
        ir.estimator = first.intervals[j].first;
        ir.method = first.intervals[j].second.method;
        Eigen::MatrixXd covered(n, K), width(n, K);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& iv = results[rep.replicates_used[static_cast<std::size_t>(i)]]->intervals[j].second;
            for (Eigen::Index k = 0; k < K; ++k) covered(i, k) = iv.covers(k, truth(k)) ? 1.0 : 0.0;
            width.row(i) = iv.width().transpose();
        }
        ir.coverage = covered.colwise().mean().transpose();
        ir.coverage_se = (ir.coverage.array() * (1.0 - ir.coverage.array()) / nd).sqrt().matrix();
        ir.width = width.colwise().mean().transpose();
        ir.width_se.resize(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            const Eigen::ArrayXd c = width.col(k).array() - ir.width(k);
            ir.width_se(k) = std::sqrt(c.square().sum() / (nd - 1.0) / nd);
        }
        rep.intervals.push_back(std::move(ir));
    }
    return rep;
}

MonteCarloReport run_monte_carlo(const ScenarioSpec& spec, const MonteCarloOptions& options) {
    spec.validate();
    options.validate();
    if (options.pipeline == PipelineKind::Logistic && spec.family != OutcomeFamily::Binary) {
        throw Error(ErrorCode::ConfigError, "the logistic pipeline needs binary outcomes");
    }
    if (options.pipeline != PipelineKind::Logistic && spec.family != OutcomeFamily::Continuous) {
        throw Error(ErrorCode::ConfigError, "normal pipelines need continuous outcomes");
    }
    const std::optional<Eigen::VectorXd> pi = options.pi ? options.pi : spec.pi;
    std::optional<Eigen::VectorXd> mu_true;
    if (options.oracle) mu_true = true_control_means(spec);
    const auto names = estimator_names(options);

    std::vector<std::optional<ReplicateEstimates>> results(options.reps);
    std::vector<std::optional<FailureRecord>> failed(options.reps);
    parallel_for(options.reps, options.workers, [&](std::size_t r) {
        const auto rep = static_cast<std::uint32_t>(r);
        try {
            const auto ds = generate_scenario(spec, options.seed, rep);
            results[r] = run_estimators(ds, options, pi, mu_true, derive_seed(options.seed, rep));
        } catch (const Error& e) {
            if (e.kind() == ErrorClass::Config) throw ReplicateError(r, e.code(), e.what());
            failed[r] = FailureRecord{r, e.code(), e.what()};
        }
    });
    std::vector<FailureRecord> failures;
    for (auto& f : failed) {
        if (f) failures.push_back(std::move(*f));
    }

    auto report = summarize(names, results, failures, true_effects(spec));
    report.scenario = spec.name;
    report.seed = options.seed;
    report.subgroup_labels.clear();
    for (std::size_t k = 0; k < spec.K; ++k) report.subgroup_labels.push_back(std::to_string(k + 1));
    report.notes.emplace_back("pipeline", std::string(to_string(options.pipeline)));
    report.notes.emplace_back("prevalence", pi ? "fixed" : "per-replicate RCT empirical");
    report.notes.emplace_back("overall_estimator",
                              options.overall == OverallSource::DiffMeans ? "diff_means" : "model");
    return report;
}

}  // namespace harmony
