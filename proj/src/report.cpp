#include "harmony/report.hpp"

#include "harmony/csv.hpp"
#include "harmony/error.hpp"

#include <cmath>
#include <fstream>

namespace harmony {

namespace {

using csv::format_double;

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
    return os;
}

std::string interval_key(const std::string& base, IntervalMethod m) {
    return base + "_" + std::string(to_string(m));
}

const std::string& label(const MonteCarloReport& r, std::size_t k) { return r.subgroup_labels.at(k); }

}  // namespace

void write_report_csv(const MonteCarloReport& r, const std::filesystem::path& path) {
    auto os = open_out(path);
    csv::write_row(os, {"scenario", "estimator", "subgroup", "metric", "value", "mc_se"});
    auto row = [&](const std::string& est, const std::string& sub, const std::string& metric, double v,
                   std::optional<double> se) {
        csv::write_row(os, {r.scenario, est, sub, metric, format_double(v), se ? format_double(*se) : ""});
    };
    row("", "all", "replicates_requested", static_cast<double>(r.reps_requested), std::nullopt);
    row("", "all", "replicates_used", static_cast<double>(r.replicates_used.size()), std::nullopt);
    row("", "all", "replicates_failed", static_cast<double>(r.failures.size()), std::nullopt);
    for (std::size_t k = 0; k < r.subgroup_labels.size(); ++k) {
        row("truth", label(r, k), "value", r.truth(static_cast<Eigen::Index>(k)), std::nullopt);
    }
    for (const auto& e : r.estimators) {
        for (std::size_t k = 0; k < e.metrics.size(); ++k) {
            const auto& m = e.metrics[k];
            row(e.name, label(r, k), "bias", m.bias, m.bias_se);
            row(e.name, label(r, k), "sd", m.sd, m.sd_se);
            row(e.name, label(r, k), "rmse", m.rmse, m.rmse_se);
        }
    }
    for (const auto& iv : r.intervals) {
        for (Eigen::Index k = 0; k < iv.coverage.size(); ++k) {
            const auto& sub = label(r, static_cast<std::size_t>(k));
            row(iv.estimator, sub, interval_key("coverage", iv.method), iv.coverage(k), iv.coverage_se(k));
            row(iv.estimator, sub, interval_key("width", iv.method), iv.width(k), iv.width_se(k));
        }
    }
}

nlohmann::json report_json(const MonteCarloReport& r) {
    using nlohmann::json;
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json j;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["replicates_requested"] = r.reps_requested;
    j["replicates_used"] = r.replicates_used.size();
    j["subgroups"] = r.subgroup_labels;
    j["truth"] = vec(r.truth);
    j["failures"] = json::array();
    for (const auto& f : r.failures) {
        j["failures"].push_back(
            {{"replicate", f.replicate}, {"code", std::string(to_string(f.code))}, {"message", f.message}});
    }
    j["estimators"] = json::array();
    for (const auto& e : r.estimators) {
        json m = json::object();
        for (const char* key : {"bias", "bias_se", "sd", "sd_se", "rmse", "rmse_se"}) m[key] = json::array();
        for (const auto& s : e.metrics) {
            m["bias"].push_back(s.bias);
            m["bias_se"].push_back(s.bias_se);
            m["sd"].push_back(s.sd);
            m["sd_se"].push_back(s.sd_se);
            m["rmse"].push_back(s.rmse);
            m["rmse_se"].push_back(s.rmse_se);
        }
        m["name"] = e.name;
        j["estimators"].push_back(std::move(m));
    }
    j["intervals"] = json::array();
    for (const auto& iv : r.intervals) {
        j["intervals"].push_back({{"estimator", iv.estimator},
                                  {"method", std::string(to_string(iv.method))},
                                  {"coverage", vec(iv.coverage)},
                                  {"coverage_se", vec(iv.coverage_se)},
                                  {"width", vec(iv.width)},
                                  {"width_se", vec(iv.width_se)}});
    }
    j["notes"] = json::object();
    for (const auto& [k, v] : r.notes) j["notes"][k] = v;
    return j;
}

void write_replicates_csv(const MonteCarloReport& r, const std::filesystem::path& path) {
    auto os = open_out(path);
    csv::write_row(os, {"replicate", "estimator", "subgroup", "estimate"});
    for (std::size_t i = 0; i < r.replicates_used.size(); ++i) {
        const std::string rep = std::to_string(r.replicates_used[i]);
        for (const auto& e : r.estimators) {
            for (Eigen::Index k = 0; k < e.estimates.cols(); ++k) {
                csv::write_row(os, {rep, e.name, label(r, static_cast<std::size_t>(k)),
                                    format_double(e.estimates(static_cast<Eigen::Index>(i), k))});
            }
        }
    }
}

EstimateResult run_estimate(const CombinedDataset& ds, const MonteCarloOptions& options) {
    options.validate();
    if (options.oracle) throw Error(ErrorCode::ConfigError, "the oracle estimator needs simulated data");
    EstimateResult out;
    out.subgroup_labels = ds.subgroup_labels;
    out.pi = compute_design_counts(ds, options.pi).pi;
    out.overall = *overall_effect(ds, options).theta_overall;
    out.names = estimator_names(options);
    out.values = run_estimators(ds, options, options.pi, std::nullopt, options.seed);

    std::size_t idx = 0;
    for (const auto& name : out.names) {
        if (name.starts_with("harmonized_") && name.ends_with("_full")) {
            const double gap = std::abs(out.pi.dot(out.values.estimates[idx]) - out.overall);
            out.full_constraint_gap = std::max(out.full_constraint_gap.value_or(0.0), gap);
        }
        ++idx;
    }
    return out;
}

void write_estimates_csv(const EstimateResult& r, const std::filesystem::path& path) {
    auto os = open_out(path);
    csv::write_row(os, {"estimator", "subgroup", "estimate"});
    for (std::size_t e = 0; e < r.names.size(); ++e) {
        const auto& theta = r.values.estimates[e];
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            csv::write_row(os, {r.names[e], r.subgroup_labels[static_cast<std::size_t>(k)], format_double(theta(k))});
        }
    }
    csv::write_row(os, {"rct_overall", "all", format_double(r.overall)});
}

void write_intervals_csv(const EstimateResult& r, const std::filesystem::path& path) {
    auto os = open_out(path);
    csv::write_row(os, {"estimator", "method", "subgroup", "lower", "upper", "alpha"});
    for (const auto& [name, iv] : r.values.intervals) {
        for (Eigen::Index k = 0; k < iv.lower.size(); ++k) {
            csv::write_row(os, {name, std::string(to_string(iv.method)), r.subgroup_labels[static_cast<std::size_t>(k)],
                                format_double(iv.lower(k)), format_double(iv.upper(k)), format_double(iv.alpha)});
        }
    }
}

void write_design_csv(const CombinedDataset& ds, const Eigen::VectorXd& pi, const std::filesystem::path& path) {
    const DesignCounts dc = compute_design_counts(ds, pi);
    auto os = open_out(path);
    csv::write_row(os, {"subgroup", "n_rct_control", "n_rct_treated", "n_ec", "pi", "ec_share"});
    for (Eigen::Index k = 0; k < pi.size(); ++k) {
        csv::write_row(os, {ds.subgroup_labels[static_cast<std::size_t>(k)], format_double(dc.n_rct(k, 0)),
                            format_double(dc.n_rct(k, 1)), format_double(dc.n_ec(k)), format_double(dc.pi(k)),
                            format_double(dc.Q(k))});
    }
}

}  // namespace harmony
