#include "harmony/cli.hpp"
#include "harmony/config.hpp"
#include "harmony/csv.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace harmony;
using testing_support::code_of;
using testing_support::TempDir;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_k2_dataset(const TempDir& dir) {
    std::mt19937_64 rng(17);
    const auto ds = testing_support::normal_dataset(rng, 2, 12, 30, {0.5, -0.2}, 0.4);
    write_dataset(ds, dir.path / "rct.csv", dir.path / "ec.csv", CsvSchema{});
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config: unknown keys are rejected at every level") {
    CHECK(code_of([] { parse_run_config(Command::Simulate, json::parse(R"({"preset":"fig1-s1","bogus":1})")); }) ==
          ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config(Command::Simulate, json::parse(R"({"preset":"fig1-s1","simulation":{"repz":3}})"));
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config(Command::Simulate, json::parse(R"({"preset":"fig4","scenario":{"covariates":{"x":1}}})"));
          }) == ErrorCode::ConfigError);
}

TEST_CASE("config: document keys override the preset and scalars broadcast") {
    const auto cfg = parse_run_config(
        Command::Simulate,
        json::parse(R"({"preset":"fig1-s1","scenario":{"distortion":0.25},"simulation":{"reps":7,"lambdas":[0,"full"]}})"));
    REQUIRE(cfg.scenario);
    CHECK(cfg.scenario->distortion.size() == static_cast<Eigen::Index>(cfg.scenario->K));
    CHECK((cfg.scenario->distortion.array() == 0.25).all());
    CHECK(cfg.simulation.reps == 7);
    REQUIRE(cfg.simulation.lambdas.size() == 2);
    CHECK(cfg.simulation.lambdas[0].is_zero());
    CHECK(cfg.simulation.lambdas[1].is_full());
}

TEST_CASE("config: resolved config round-trips through JSON") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const Command cmd = name == "gbm-like" ? Command::Resample : Command::Simulate;
        const auto cfg = parse_run_config(cmd, json{{"preset", name}});
        const json once = to_json(cfg);
        CHECK(to_json(parse_run_config(cmd, once)) == once);
    }
}

TEST_CASE("config: bad values") {
    CHECK(code_of([] { lambda_from_json("infinite"); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { lambda_from_json(-1.0); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { sigma_mode_from_string("xx"); }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config(Command::Simulate, json::parse(R"({"preset":"fig1-s1","scenario":{"mu":[1,2]}})"));
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] { parse_run_config(Command::Estimate, json::object()); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { parse_run_config(Command::Estimate, json{{"preset", "fig1-s1"}, {"command", "simulate"}}); }) ==
          ErrorCode::ConfigError);
}

TEST_CASE("estimate on a K = 2 dataset") {
    TempDir dir;
    write_k2_dataset(dir);
    const auto out = dir.path / "out";
    const auto r = cli({"estimate", "--rct", (dir.path / "rct.csv").string(), "--ec", (dir.path / "ec.csv").string(),
                        "--lambda", "0", "--lambda", "full", "--sigma-mode", "bd", "--sigma-mode", "vd",
                        "--out-dir", out.string()});
    INFO(r.err);
    REQUIRE(r.code == ExitOk);
    const auto est = csv::read(out / "estimates.csv");
    CHECK(est.header == std::vector<std::string>{"estimator", "subgroup", "estimate"});
    // pooled, rct_only, 2 modes x 2 lambdas, each with 2 subgroups, plus the overall row.
    CHECK(est.rows.size() == (2 + 4) * 2 + 1);
    const auto design = csv::read(out / "design.csv");
    CHECK(design.rows.size() == 2);
    CHECK(design.rows[0][1] == "12");
    CHECK(design.rows[0][3] == "30");

    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["version"] == HARMONY_VERSION);
    CHECK(manifest["full_constraint"]["satisfied"] == true);
    CHECK(manifest["full_constraint"]["max_abs_gap"].get<double>() <= 1e-10);
}

TEST_CASE("estimate with a missing EC file exits with the data code") {
    TempDir dir;
    write_k2_dataset(dir);
    const auto r = cli({"estimate", "--rct", (dir.path / "rct.csv").string(), "--ec",
                        (dir.path / "absent.csv").string(), "--out-dir", (dir.path / "out").string()});
    CHECK(r.code == ExitData);
    const auto rec = json::parse(r.err);
    CHECK(rec["code"] == "MissingFile");
    CHECK(std::filesystem::exists(dir.path / "out" / "error.json"));
}

TEST_CASE("config errors exit with the config code") {
    TempDir dir;
    const auto cfg = dir.write("bad.json", R"({"preset":"fig1-s1","simulation":{"unknown_flag":true}})");
    CHECK(cli({"simulate", "--config", cfg.string(), "--out-dir", (dir.path / "o").string()}).code == ExitConfig);
    const auto broken = dir.write("broken.json", "{not json");
    CHECK(cli({"simulate", "--config", broken.string()}).code == ExitConfig);
    CHECK(cli({"simulate", "--preset", "fig1-s1", "--lambda", "big"}).code == ExitConfig);
    CHECK(cli({"frobnicate"}).code == ExitUsage);
}

TEST_CASE("simulate smoke run with two replicates") {
    TempDir dir;
    const auto out = dir.path / "o";
    const auto r = cli({"simulate", "--preset", "fig1-s2", "--reps", "2", "--out-dir", out.string()});
    INFO(r.err);
    REQUIRE(r.code == ExitOk);
    for (const char* f : {"report.csv", "report.json", "replicates.csv", "manifest.json"}) {
        CHECK(std::filesystem::exists(out / f));
    }
    const auto report = csv::read(out / "report.csv");
    CHECK(report.header == std::vector<std::string>{"scenario", "estimator", "subgroup", "metric", "value", "mc_se"});
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["replicates_used"] == 2);
    CHECK(manifest["config"]["simulation"]["reps"] == 2);
}

TEST_CASE("outputs do not depend on the worker count") {
    TempDir dir;
    const auto cfg = dir.write("c.json", R"({"preset":"fig1-s2","scenario":{"K":3,"n_rct":[6,6],"n_ec":20,
        "mu":0,"theta":0,"distortion":[0.5,0,-0.5]},
        "simulation":{"reps":12,"intervals":["analytic","cut","bootstrap","rct_only"],"bootstrap_reps":100,
        "cut":true,"lambdas":[1,"full"],"sigma_modes":["bd","vd"]}})");
    const auto a = dir.path / "a";
    const auto b = dir.path / "b";
    REQUIRE(cli({"simulate", "--config", cfg.string(), "--workers", "1", "--out-dir", a.string()}).code == ExitOk);
    REQUIRE(cli({"simulate", "--config", cfg.string(), "--workers", "3", "--out-dir", b.string()}).code == ExitOk);
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
    CHECK(slurp(a / "replicates.csv") == slurp(b / "replicates.csv"));
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
}

TEST_CASE("resample from the synthetic pools") {
    TempDir dir;
    const auto out = dir.path / "o";
    const auto r = cli({"resample", "--preset", "gbm-like", "--reps", "5", "--out-dir", out.string()});
    INFO(r.err);
    REQUIRE(r.code == ExitOk);
    const auto rep = json::parse(slurp(out / "report.json"));
    std::vector<std::string> names;
    for (const auto& e : rep["estimators"]) names.push_back(e["name"]);
    CHECK(names.front() == "pooled");
    CHECK(names.back() == "rct_only");
}

TEST_CASE("presets listing") {
    const auto r = cli({"presets"});
    CHECK(r.code == ExitOk);
    CHECK(r.out.find("fig4") != std::string::npos);
}

}
