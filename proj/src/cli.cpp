#include "harmony/cli.hpp"

#include "harmony/config.hpp"
#include "harmony/error.hpp"
#include "harmony/report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <sstream>

namespace harmony {

namespace {

struct Overrides {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<std::size_t> workers;
    std::optional<double> alpha;
    std::string out_dir;
    std::vector<std::string> lambdas;
    std::vector<std::string> sigma_modes;
    std::string rct_csv, ec_csv;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, path + ": " + e.what());
    }
}

Lambda parse_lambda(const std::string& s) {
    if (s == "full") return Lambda::full();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size()) throw Error(ErrorCode::ConfigError, "--lambda expects a number or 'full', got '" + s + "'");
    return Lambda::finite(v);
}

RunConfig resolve(Command command, const Overrides& ov) {
    json doc = ov.config_path.empty() ? json::object() : read_json_file(ov.config_path);
    if (!ov.preset.empty()) doc["preset"] = ov.preset;
    if (!ov.rct_csv.empty() || !ov.ec_csv.empty()) {
        if (ov.rct_csv.empty() || ov.ec_csv.empty()) {
            throw Error(ErrorCode::ConfigError, "--rct and --ec must be given together");
        }
        doc["data"]["rct_csv"] = ov.rct_csv;
        doc["data"]["ec_csv"] = ov.ec_csv;
    }
    RunConfig cfg = parse_run_config(command, doc);

    std::vector<Lambda> lambdas;
    for (const auto& s : ov.lambdas) lambdas.push_back(parse_lambda(s));
    std::vector<SigmaMode> modes;
    for (const auto& s : ov.sigma_modes) modes.push_back(sigma_mode_from_string(s));

    if (command == Command::Resample) {
        auto& r = cfg.resampling;
        if (ov.seed) r.seed = *ov.seed;
        if (ov.reps) r.reps = *ov.reps;
        if (ov.workers) r.workers = *ov.workers;
        if (!lambdas.empty()) r.lambdas = lambdas;
        if (!modes.empty()) r.sigma_modes = modes;
        if (ov.alpha) throw Error(ErrorCode::ConfigError, "--alpha does not apply to resample");
    } else {
        auto& s = cfg.simulation;
        if (ov.seed) s.seed = *ov.seed;
        if (ov.reps) s.reps = *ov.reps;
        if (ov.workers) s.workers = *ov.workers;
        if (ov.alpha) s.alpha = *ov.alpha;
        if (!lambdas.empty()) s.lambdas = lambdas;
        if (!modes.empty()) s.sigma_modes = modes;
    }
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    return cfg;
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json manifest_base(const RunConfig& cfg) {
    return json{{"tool", "harmony"}, {"version", HARMONY_VERSION}, {"status", "ok"}, {"config", to_json(cfg)}};
}

void prepare_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw Error(ErrorCode::ConfigError, "cannot create " + cfg.out_dir.string() + ": " + ec.message());
}

void run_estimate_command(const RunConfig& cfg, std::ostream& out) {
    const auto& src = *cfg.data;
    const CombinedDataset ds = load_dataset(src.rct_csv, src.ec_csv, src.schema);
    const EstimateResult result = run_estimate(ds, cfg.simulation);
    prepare_out_dir(cfg);
    write_estimates_csv(result, cfg.out_dir / "estimates.csv");
    write_intervals_csv(result, cfg.out_dir / "intervals.csv");
    write_design_csv(ds, result.pi, cfg.out_dir / "design.csv");

    json m = manifest_base(cfg);
    m["outputs"] = {"estimates.csv", "intervals.csv", "design.csv"};
    m["subgroups"] = result.subgroup_labels;
    m["rct_overall"] = result.overall;
    if (result.full_constraint_gap) {
        const double gap = *result.full_constraint_gap;
        m["full_constraint"] = {{"max_abs_gap", gap}, {"tolerance", 1e-10}, {"satisfied", gap <= 1e-10}};
    }
    write_json(m, cfg.out_dir / "manifest.json");
    out << "estimate: " << result.names.size() << " estimators, K = " << result.subgroup_labels.size() << ", wrote "
        << cfg.out_dir.string() << '\n';
}

void write_mc_outputs(const RunConfig& cfg, const MonteCarloReport& report, std::ostream& out) {
    prepare_out_dir(cfg);
    write_report_csv(report, cfg.out_dir / "report.csv");
    write_json(report_json(report), cfg.out_dir / "report.json");
    json m = manifest_base(cfg);
    m["outputs"] = {"report.csv", "report.json"};
    if (cfg.keep_replicates) {
        write_replicates_csv(report, cfg.out_dir / "replicates.csv");
        m["outputs"].push_back("replicates.csv");
    }
    m["replicates_used"] = report.replicates_used.size();
    m["replicates_failed"] = report.failures.size();
    write_json(m, cfg.out_dir / "manifest.json");
    out << to_string(cfg.command) << ": " << report.replicates_used.size() << "/" << report.reps_requested
        << " replicates used, " << report.estimators.size() << " estimators, wrote " << cfg.out_dir.string() << '\n';
}

void run_simulate_command(const RunConfig& cfg, std::ostream& out) {
    write_mc_outputs(cfg, run_monte_carlo(*cfg.scenario, cfg.simulation), out);
}

void run_resample_command(const RunConfig& cfg, std::ostream& out) {
    CombinedDataset pools;
    if (cfg.data) {
        pools = load_dataset(cfg.data->rct_csv, cfg.data->ec_csv, cfg.data->schema);
    } else {
        pools = gbm_like_pools(*cfg.synthetic_pool_seed);
    }
    write_mc_outputs(cfg, run_resampling(pools, cfg.resampling), out);
}

int exit_code_for(ErrorClass c) {
    switch (c) {
        case ErrorClass::Config: return ExitConfig;
        case ErrorClass::Data: return ExitData;
        case ErrorClass::Numerical: return ExitNumerical;
    }
    return ExitNumerical;
}

int report_failure(const Error& e, ErrorCode code, const std::filesystem::path& out_dir, std::ostream& err) {
    const ErrorClass cls = error_class(code);
    const char* cls_name = cls == ErrorClass::Config ? "config" : cls == ErrorClass::Data ? "data" : "numerical";
    json rec{{"status", "error"},
             {"code", std::string(to_string(code))},
             {"class", cls_name},
             {"message", e.what()},
             {"version", HARMONY_VERSION}};
    if (const auto* re = dynamic_cast<const ReplicateError*>(&e)) rec["replicate"] = re->replicate();
    err << rec.dump() << '\n';
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (!ec) {
            std::ofstream os(out_dir / "error.json", std::ios::binary);
            if (os) os << rec.dump(2) << '\n';
        }
    }
    return exit_code_for(cls);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Harmonised subgroup treatment effects from RCT and external-control data", "harmony"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(HARMONY_VERSION));

    Overrides ov;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", ov.config_path, "JSON run configuration");
        sub->add_option("--preset", ov.preset, "Named preset applied before the config file");
        sub->add_option("--seed", ov.seed, "Master seed");
        sub->add_option("--workers", ov.workers, "Worker threads (results do not depend on it)");
        sub->add_option("--out-dir", ov.out_dir, "Output directory");
        sub->add_option("--lambda", ov.lambdas, "Penalty weights: numbers or 'full'");
        sub->add_option("--sigma-mode", ov.sigma_modes, "fixed, bd or vd");
    };
    auto* estimate = app.add_subcommand("estimate", "Estimate subgroup effects on one RCT + EC dataset");
    add_common(estimate);
    estimate->add_option("--alpha", ov.alpha, "Interval level is 1 - alpha");
    estimate->add_option("--rct", ov.rct_csv, "RCT CSV file");
    estimate->add_option("--ec", ov.ec_csv, "External-control CSV file");

    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo study of a scenario");
    add_common(simulate);
    simulate->add_option("--reps", ov.reps, "Replicates");
    simulate->add_option("--alpha", ov.alpha, "Interval level is 1 - alpha");

    auto* resample = app.add_subcommand("resample", "Resampling study from trial and EC pools");
    add_common(resample);
    resample->add_option("--reps", ov.reps, "Replicates");
    resample->add_option("--rct", ov.rct_csv, "Trial pool CSV file");
    resample->add_option("--ec", ov.ec_csv, "EC pool CSV file");

    auto* presets = app.add_subcommand("presets", "List the built-in presets");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ExitOk;
    } catch (const CLI::CallForVersion&) {
        out << HARMONY_VERSION << '\n';
        return ExitOk;
    } catch (const CLI::ParseError& e) {
        err << json{{"status", "error"}, {"code", "UsageError"}, {"class", "usage"}, {"message", e.what()}}.dump()
            << '\n';
        return ExitUsage;
    }

    if (presets->parsed()) {
        for (const auto& name : preset_names()) out << name << '\n';
        return ExitOk;
    }
    const Command command = estimate->parsed() ? Command::Estimate
                            : simulate->parsed() ? Command::Simulate
                                                 : Command::Resample;
    std::filesystem::path out_dir = ov.out_dir;
    try {
        const RunConfig cfg = resolve(command, ov);
        out_dir = cfg.out_dir;
        switch (command) {
            case Command::Estimate: run_estimate_command(cfg, out); break;
            case Command::Simulate: run_simulate_command(cfg, out); break;
            case Command::Resample: run_resample_command(cfg, out); break;
        }
        return ExitOk;
    } catch (const ReplicateError& e) {
        return report_failure(e, e.cause(), out_dir, err);
    } catch (const Error& e) {
        return report_failure(e, e.code(), out_dir, err);
    }
}

}  // namespace harmony
