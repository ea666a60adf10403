#include "harmony/config.hpp"

#include "harmony/error.hpp"
#include "harmony/presets_data.hpp"

#include <set>

namespace harmony {

std::string_view to_string(Command command) noexcept {
    switch (command) {
        case Command::Estimate: return "estimate";
        case Command::Simulate: return "simulate";
        case Command::Resample: return "resample";
    }
    return "unknown";
}

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::ConfigError, where + ": " + what);
}

/// Object reader that rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) bad(where_, "expected an object");
    }
    Reader(const Reader&) = delete;

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    const json& at(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }
    std::string path(const std::string& key) const { return where_ + "." + key; }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            bad(path(key), e.what());
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) bad(where_, "unknown key '" + key + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

double number(const json& j, const std::string& where) {
    if (!j.is_number()) bad(where, "expected a number");
    return j.get<double>();
}

/// Scalar broadcast to K entries, or an array of exactly K numbers.
Eigen::VectorXd per_subgroup(const json& j, std::size_t K, const std::string& where) {
    const auto k = static_cast<Eigen::Index>(K);
    if (j.is_number()) return Eigen::VectorXd::Constant(k, j.get<double>());
    if (!j.is_array() || j.size() != K) bad(where, "expected a number or " + std::to_string(K) + " numbers");
    Eigen::VectorXd v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = number(j[static_cast<std::size_t>(i)], where);
    return v;
}

Eigen::VectorXd vector_of(const json& j, const std::string& where) {
    if (!j.is_array()) bad(where, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
    return v;
}

int count(const json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() < 0) bad(where, "expected a non-negative integer");
    return j.get<int>();
}

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

OutcomeFamily family_from(const std::string& s, const std::string& where) {
    if (s == "continuous") return OutcomeFamily::Continuous;
    if (s == "binary") return OutcomeFamily::Binary;
    bad(where, "family must be 'continuous' or 'binary'");
}

std::string family_name(OutcomeFamily f) { return f == OutcomeFamily::Binary ? "binary" : "continuous"; }

PipelineKind pipeline_from(const std::string& s, const std::string& where) {
    if (s == "diff_means") return PipelineKind::DiffMeans;
    if (s == "linear") return PipelineKind::Linear;
    if (s == "logistic") return PipelineKind::Logistic;
    bad(where, "pipeline must be diff_means, linear or logistic");
}

IntervalMethod interval_from(const std::string& s, const std::string& where) {
    for (auto m : {IntervalMethod::Analytic, IntervalMethod::Cut, IntervalMethod::Bootstrap, IntervalMethod::RctOnly}) {
        if (s == to_string(m)) return m;
    }
    bad(where, "unknown interval method '" + s + "'");
}

OverallSource overall_from(const std::string& s, const std::string& where) {
    if (s == "diff_means") return OverallSource::DiffMeans;
    if (s == "model") return OverallSource::Model;
    bad(where, "overall must be 'diff_means' or 'model'");
}

std::string overall_name(OverallSource o) { return o == OverallSource::DiffMeans ? "diff_means" : "model"; }

template <typename T, typename F>
std::vector<T> list_of(const json& j, const std::string& where, F&& convert) {
    if (!j.is_array()) bad(where, "expected an array");
    std::vector<T> out;
    for (const auto& item : j) out.push_back(convert(item));
    return out;
}

std::vector<Lambda> lambdas_from(const json& j, const std::string& where) {
    return list_of<Lambda>(j, where, [](const json& x) { return lambda_from_json(x); });
}

std::vector<SigmaMode> modes_from(const json& j, const std::string& where) {
    return list_of<SigmaMode>(j, where, [&](const json& x) {
        if (!x.is_string()) bad(where, "sigma modes are strings");
        return sigma_mode_from_string(x.get<std::string>());
    });
}

json lambdas_json(const std::vector<Lambda>& ls) {
    json out = json::array();
    for (const auto& l : ls) out.push_back(lambda_to_json(l));
    return out;
}

json modes_json(const std::vector<SigmaMode>& ms) {
    json out = json::array();
    for (auto m : ms) out.push_back(std::string(to_string(m)));
    return out;
}

void read_simulation(const json& j, MonteCarloOptions& o) {
    Reader r(j, "simulation");
    if (r.has("pipeline")) o.pipeline = pipeline_from(r.at("pipeline").get<std::string>(), r.path("pipeline"));
    if (r.has("lambdas")) o.lambdas = lambdas_from(r.at("lambdas"), r.path("lambdas"));
    if (r.has("sigma_modes")) o.sigma_modes = modes_from(r.at("sigma_modes"), r.path("sigma_modes"));
    if (r.has("overall")) o.overall = overall_from(r.at("overall").get<std::string>(), r.path("overall"));
    r.read("pooled", o.pooled);
    r.read("rct_only", o.rct_only);
    r.read("harmonized", o.harmonized);
    r.read("oracle", o.oracle);
    r.read("cut", o.cut);
    r.read("ipw", o.ipw);
    r.read("cut_prior_variance", o.cut_prior_variance);
    if (r.has("intervals")) {
        o.intervals = list_of<IntervalMethod>(r.at("intervals"), r.path("intervals"), [&](const json& x) {
            if (!x.is_string()) bad(r.path("intervals"), "interval methods are strings");
            return interval_from(x.get<std::string>(), r.path("intervals"));
        });
    }
    r.read("bootstrap_reps", o.bootstrap_reps);
    r.read("alpha", o.alpha);
    r.read("reps", o.reps);
    r.read("seed", o.seed);
    r.read("workers", o.workers);
    if (r.has("pi")) o.pi = vector_of(r.at("pi"), r.path("pi"));
    r.finish();
}

json simulation_json(const MonteCarloOptions& o) {
    json j;
    j["pipeline"] = std::string(to_string(o.pipeline));
    j["lambdas"] = lambdas_json(o.lambdas);
    j["sigma_modes"] = modes_json(o.sigma_modes);
    j["overall"] = overall_name(o.overall);
    j["pooled"] = o.pooled;
    j["rct_only"] = o.rct_only;
    j["harmonized"] = o.harmonized;
    j["oracle"] = o.oracle;
    j["cut"] = o.cut;
    j["ipw"] = o.ipw;
    j["cut_prior_variance"] = o.cut_prior_variance;
    j["intervals"] = json::array();
    for (auto m : o.intervals) j["intervals"].push_back(std::string(to_string(m)));
    j["bootstrap_reps"] = o.bootstrap_reps;
    j["alpha"] = o.alpha;
    j["reps"] = o.reps;
    j["seed"] = o.seed;
    j["workers"] = o.workers;
    j["pi"] = o.pi ? vec(*o.pi) : json(nullptr);
    return j;
}

void read_resampling(const json& j, ResamplingOptions& o) {
    Reader r(j, "resampling");
    r.read("n_control", o.n_control);
    r.read("n_experimental", o.n_experimental);
    r.read("n_ec", o.n_ec);
    r.read("reps", o.reps);
    r.read("seed", o.seed);
    r.read("workers", o.workers);
    r.read("per_replicate_pi", o.per_replicate_pi);
    if (r.has("spike")) o.spike = vector_of(r.at("spike"), r.path("spike"));
    if (r.has("lambdas")) o.lambdas = lambdas_from(r.at("lambdas"), r.path("lambdas"));
    if (r.has("sigma_modes")) o.sigma_modes = modes_from(r.at("sigma_modes"), r.path("sigma_modes"));
    if (r.has("overall")) o.overall = overall_from(r.at("overall").get<std::string>(), r.path("overall"));
    r.finish();
}

json resampling_json(const ResamplingOptions& o) {
    json j;
    j["n_control"] = o.n_control;
    j["n_experimental"] = o.n_experimental;
    j["n_ec"] = o.n_ec;
    j["reps"] = o.reps;
    j["seed"] = o.seed;
    j["workers"] = o.workers;
    j["per_replicate_pi"] = o.per_replicate_pi;
    j["spike"] = o.spike ? vec(*o.spike) : json(nullptr);
    j["lambdas"] = lambdas_json(o.lambdas);
    j["sigma_modes"] = modes_json(o.sigma_modes);
    j["overall"] = overall_name(o.overall);
    return j;
}

DataSource read_data(const json& j) {
    Reader r(j, "data");
    DataSource d;
    if (!r.has("rct_csv") || !r.has("ec_csv")) bad("data", "rct_csv and ec_csv are required");
    d.rct_csv = r.at("rct_csv").get<std::string>();
    d.ec_csv = r.at("ec_csv").get<std::string>();
    if (r.has("schema")) {
        Reader s(r.at("schema"), "data.schema");
        auto& c = d.schema;
        s.read("outcome", c.outcome);
        s.read("treatment", c.treatment);
        s.read("subgroup", c.subgroup);
        s.read("covariates", c.covariates);
        if (s.has("weight")) c.weight = s.at("weight").get<std::string>();
        if (s.has("family")) c.family = family_from(s.at("family").get<std::string>(), s.path("family"));
        if (s.has("subgroup_labels")) c.subgroup_labels = s.at("subgroup_labels").get<std::vector<std::string>>();
        s.read("ec_requires_treatment", c.ec_requires_treatment);
        s.finish();
    }
    r.finish();
    return d;
}

json data_json(const DataSource& d) {
    json s;
    s["outcome"] = d.schema.outcome;
    s["treatment"] = d.schema.treatment;
    s["subgroup"] = d.schema.subgroup;
    s["covariates"] = d.schema.covariates;
    s["weight"] = d.schema.weight ? json(*d.schema.weight) : json(nullptr);
    s["family"] = family_name(d.schema.family);
    s["subgroup_labels"] = d.schema.subgroup_labels ? json(*d.schema.subgroup_labels) : json(nullptr);
    s["ec_requires_treatment"] = d.schema.ec_requires_treatment;
    return json{{"rct_csv", d.rct_csv.string()}, {"ec_csv", d.ec_csv.string()}, {"schema", s}};
}

}  // namespace

json lambda_to_json(const Lambda& lambda) {
    if (lambda.is_full()) return "full";
    return lambda.value();
}

Lambda lambda_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "full") return Lambda::full();
        bad("lambda", "the only string value is \"full\"");
    }
    if (!j.is_number()) bad("lambda", "expected a non-negative number or \"full\"");
    return Lambda::finite(j.get<double>());
}

SigmaMode sigma_mode_from_string(const std::string& s) {
    if (s == "fixed") return SigmaMode::Fixed;
    if (s == "bd") return SigmaMode::BiasDirected;
    if (s == "vd") return SigmaMode::VarianceDirected;
    bad("sigma_mode", "expected fixed, bd or vd, got '" + s + "'");
}

ScenarioSpec scenario_from_json(const json& j) {
    Reader r(j, "scenario");
    ScenarioSpec s;
    r.read("name", s.name);
    if (r.has("family")) s.family = family_from(r.at("family").get<std::string>(), r.path("family"));
    if (!r.has("K")) bad("scenario", "K is required");
    s.K = static_cast<std::size_t>(count(r.at("K"), r.path("K")));
    if (s.K == 0) bad(r.path("K"), "must be positive");
    const auto K = static_cast<Eigen::Index>(s.K);

    if (!r.has("n_rct")) bad("scenario", "n_rct is required");
    const json& n = r.at("n_rct");
    s.n_rct.resize(K, 2);
    if (n.is_array() && n.size() == 2 && n[0].is_number()) {
        for (Eigen::Index k = 0; k < K; ++k) {
            for (int t = 0; t < 2; ++t) s.n_rct(k, t) = count(n[static_cast<std::size_t>(t)], r.path("n_rct"));
        }
    } else if (n.is_array() && n.size() == s.K) {
        for (Eigen::Index k = 0; k < K; ++k) {
            const json& row = n[static_cast<std::size_t>(k)];
            if (!row.is_array() || row.size() != 2) bad(r.path("n_rct"), "each subgroup needs [control, treated]");
            for (int t = 0; t < 2; ++t) s.n_rct(k, t) = count(row[static_cast<std::size_t>(t)], r.path("n_rct"));
        }
    } else {
        bad(r.path("n_rct"), "expected [control, treated] or one such pair per subgroup");
    }
    s.n_ec = Eigen::VectorXi::Zero(K);
    if (r.has("n_ec")) s.n_ec = per_subgroup(r.at("n_ec"), s.K, r.path("n_ec")).cast<int>();

    s.mu = r.has("mu") ? per_subgroup(r.at("mu"), s.K, r.path("mu")) : Eigen::VectorXd::Zero(K);
    s.theta = r.has("theta") ? per_subgroup(r.at("theta"), s.K, r.path("theta")) : Eigen::VectorXd::Zero(K);
    s.distortion = r.has("distortion") ? per_subgroup(r.at("distortion"), s.K, r.path("distortion"))
                                       : Eigen::VectorXd::Zero(K);
    r.read("phi2", s.phi2);
    s.beta.resize(0);
    if (r.has("covariates")) {
        Reader c(r.at("covariates"), "scenario.covariates");
        auto& cs = s.covariates;
        if (c.has("rct_mean")) cs.rct_mean = vector_of(c.at("rct_mean"), c.path("rct_mean"));
        if (c.has("rct_sd")) cs.rct_sd = vector_of(c.at("rct_sd"), c.path("rct_sd"));
        if (c.has("ec_mean")) cs.ec_mean = vector_of(c.at("ec_mean"), c.path("ec_mean"));
        if (c.has("ec_sd")) cs.ec_sd = vector_of(c.at("ec_sd"), c.path("ec_sd"));
        if (c.has("mode")) {
            const auto m = c.at("mode").get<std::string>();
            if (m == "fixed") {
                cs.mode = CovariateMode::Fixed;
            } else if (m == "per_replicate") {
                cs.mode = CovariateMode::PerReplicate;
            } else {
                bad(c.path("mode"), "expected 'fixed' or 'per_replicate'");
            }
        }
        c.finish();
        cs.d = static_cast<std::size_t>(cs.rct_mean.size());
    }
    if (r.has("beta")) s.beta = vector_of(r.at("beta"), r.path("beta"));
    if (r.has("pi")) s.pi = vector_of(r.at("pi"), r.path("pi"));
    r.finish();
    s.validate();
    return s;
}

json to_json(const ScenarioSpec& s) {
    json j;
    j["name"] = s.name;
    j["family"] = family_name(s.family);
    j["K"] = s.K;
    json n = json::array();
    for (Eigen::Index k = 0; k < s.n_rct.rows(); ++k) n.push_back({s.n_rct(k, 0), s.n_rct(k, 1)});
    j["n_rct"] = n;
    j["n_ec"] = std::vector<int>(s.n_ec.data(), s.n_ec.data() + s.n_ec.size());
    j["mu"] = vec(s.mu);
    j["theta"] = vec(s.theta);
    j["distortion"] = vec(s.distortion);
    j["phi2"] = s.phi2;
    if (s.covariates.d > 0) {
        j["covariates"] = {{"rct_mean", vec(s.covariates.rct_mean)},
                           {"rct_sd", vec(s.covariates.rct_sd)},
                           {"ec_mean", vec(s.covariates.ec_mean)},
                           {"ec_sd", vec(s.covariates.ec_sd)},
                           {"mode", s.covariates.mode == CovariateMode::Fixed ? "fixed" : "per_replicate"}};
    }
    j["beta"] = vec(s.beta);
    j["pi"] = s.pi ? vec(*s.pi) : json(nullptr);
    return j;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& p : embedded::presets) names.emplace_back(p.name);
    return names;
}

json preset_json(const std::string& name) {
    for (const auto& p : embedded::presets) {
        if (p.name == name) return json::parse(p.json);
    }
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    bad("preset", "unknown preset '" + name + "' (known: " + known + ")");
}

RunConfig parse_run_config(Command command, const json& input) {
    if (!input.is_object()) bad("config", "expected a JSON object");
    json doc = input;
    RunConfig cfg;
    cfg.command = command;
    if (doc.contains("preset") && !doc["preset"].is_null()) {
        cfg.preset = doc["preset"].get<std::string>();
        json merged = preset_json(*cfg.preset);
        doc.erase("preset");
        merged.merge_patch(doc);
        doc = std::move(merged);
    }
    Reader r(doc, "config");
    if (r.has("command") && r.at("command").get<std::string>() != to_string(command)) {
        bad("config", "file is for '" + r.at("command").get<std::string>() + "' but the command is '" +
                          std::string(to_string(command)) + "'");
    }
    r.has("name");
    r.has("version");
    r.read("description", cfg.description);
    if (r.has("scenario")) {
        cfg.scenario = scenario_from_json(r.at("scenario"));
        if (cfg.scenario->name.empty() && cfg.preset) cfg.scenario->name = *cfg.preset;
    }
    if (r.has("simulation")) read_simulation(r.at("simulation"), cfg.simulation);
    if (r.has("resampling")) read_resampling(r.at("resampling"), cfg.resampling);
    if (r.has("data")) cfg.data = read_data(r.at("data"));
    if (r.has("pools")) {
        Reader p(r.at("pools"), "pools");
        std::uint64_t seed = 0;
        p.read("synthetic_seed", seed);
        p.finish();
        cfg.synthetic_pool_seed = seed;
    }
    if (r.has("out_dir")) cfg.out_dir = r.at("out_dir").get<std::string>();
    r.read("keep_replicates", cfg.keep_replicates);
    r.finish();

    switch (command) {
        case Command::Estimate:
            if (!cfg.data) bad("config", "estimate needs a data section");
            break;
        case Command::Simulate:
            if (!cfg.scenario) bad("config", "simulate needs a scenario (inline or from a preset)");
            break;
        case Command::Resample:
            if (!cfg.data && !cfg.synthetic_pool_seed) bad("config", "resample needs a data or pools section");
            break;
    }
    return cfg;
}

json to_json(const RunConfig& c) {
    json j;
    j["command"] = std::string(to_string(c.command));
    j["preset"] = c.preset ? json(*c.preset) : json(nullptr);
    j["description"] = c.description;
    if (c.scenario) j["scenario"] = to_json(*c.scenario);
    if (c.command == Command::Resample) {
        j["resampling"] = resampling_json(c.resampling);
    } else {
        j["simulation"] = simulation_json(c.simulation);
    }
    if (c.data) j["data"] = data_json(*c.data);
    if (c.synthetic_pool_seed) j["pools"] = {{"synthetic_seed", *c.synthetic_pool_seed}};
    j["out_dir"] = c.out_dir.string();
    j["keep_replicates"] = c.keep_replicates;
    return j;
}

}  // namespace harmony
