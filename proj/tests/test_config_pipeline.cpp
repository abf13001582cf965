#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fragility/csv.hpp"
#include "fragility/pipeline.hpp"
#include "fragility/synthgen.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace fragility;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A 12-category, 500-day synthetic world with controls, and a config sized for it.
fs::path small_world(const std::string& tag) {
  const auto dir = oracle::scratch_dir(tag);
  const auto spec = scenario::planted_core(31, 12, 4, 0.7, 0.05, 500);
  save_snapshot(generate_panel(spec), dir / "panel.csv");
  save_controls(generate_controls(spec), dir / "controls.csv");
  write_text(dir / "config.json", R"({
  "schema_version": 1,
  "data": {"snapshot": "panel.csv", "controls": "controls.csv"},
  "rolling": {"window": 60, "step": 10},
  "attack": {"k_grid": [1, 3, 5], "mc_draws": 8, "seed": 99},
  "regression": {"horizons": [7, 14], "vol_window": 10},
  "robustness": {"glasso_sweep": [0.1]},
  "output_dir": ")" + (dir / "out").string() + R"("
})");
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FRAGILITY_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config round trips through its JSON form") {
  PipelineConfig c;
  c.snapshot = "x.csv";
  c.cleaning_level = CleaningLevel::Protocol;
  c.winsor_quantile = stats::QuantileMethod::Type7;
  c.winsor_pooled = true;
  c.estimator = CorrelationSource::GlassoPartial;
  c.rho_grid = {0.2, 0.4};
  c.k_grid = {2, 4};
  c.seed = 123456789012345ULL;
  c.stars = StarDistribution::StudentT;
  c.glasso_sweep = {0.01, 0.2};
  c.rcs_frozen_n = true;
  c.jobs = 3;
  CHECK(parse_config(serialize_config(c)) == c);
  CHECK(parse_config(serialize_config(PipelineConfig{})) == PipelineConfig{});
  CHECK(parse_config("{}") == PipelineConfig{});
}

TEST_CASE("unknown keys and malformed documents are rejected") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"rolling": {"windw": 90}})"), doctest::Contains("windw"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"rolling": )"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"rolling": {"window": "ninety"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 2})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"network": {"estimator": "spearman"}})"), ValidationError);
}

TEST_CASE("overrides apply on top of the document in order") {
  const std::string doc = R"({"rolling": {"window": 90}, "attack": {"mc_draws": 50}})";
  CHECK(parse_config(doc).window == 90);
  CHECK(parse_config(doc, {"rolling.window=100"}).window == 100);
  CHECK(parse_config(doc, {"rolling.window=100", "rolling.window=110"}).window == 110);
  CHECK(parse_config(doc, {"rolling.step=3"}).window == 90);
  const auto c = parse_config(doc, {"network.estimator=pearson", "attack.k_grid=[1,2]", "output_dir=elsewhere"});
  CHECK(c.estimator == CorrelationSource::Pearson);
  CHECK(c.k_grid == std::vector<int>{1, 2});
  CHECK(c.output_dir == "elsewhere");
  CHECK_THROWS_AS(parse_config(doc, {"rolling.widow=1"}), ValidationError);
  CHECK_THROWS_AS(parse_config(doc, {"no_equals_sign"}), ValidationError);
}

TEST_CASE("stage preconditions are enforced at load time") {
  CHECK_THROWS_AS(parse_config(R"({"rolling": {"window": 60, "step": 61}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"rolling": {"window": 20}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"attack": {"mc_draws": 1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"attack": {"k_grid": [3, 1]}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"attack": {"regime_tail": 0.6}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"network": {"rho": 1.0}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"returns": {"winsor_level": 0.5}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"data": {"start": "2022-05-01", "end": "2022-01-01"}})"), ValidationError);
}

TEST_CASE("relative input paths resolve against the config file") {
  const auto dir = oracle::scratch_dir("cfgpaths");
  write_text(dir / "c.json", R"({"data": {"snapshot": "sub/p.csv", "controls": "/abs/c.csv"}})");
  const auto c = load_config(dir / "c.json");
  CHECK(fs::path(c.snapshot) == (dir / "sub/p.csv").lexically_normal());
  CHECK(c.controls == "/abs/c.csv");
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ValidationError);
}

TEST_CASE("end-to-end run on a small synthetic world") {
  const auto dir = small_world("e2e");
  const auto cfg = load_config(dir / "config.json");
  Diagnostics diag;
  run_pipeline(cfg, {read_text(dir / "config.json"), {}}, &diag);
  const OutputLayout out{cfg.output_dir};
  CHECK_FALSE(fs::exists(cfg.output_dir + ".staging"));
  for (const auto& f : {out.cfi() / "model.json", out.cfi() / "cfi.csv", out.rcs() / "ranking.csv",
                        out.attack() / "curves.csv", out.regressions() / "regressions.csv",
                        out.robustness() / "correlations.csv", out.manifest() / "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(f), f.string());
  }

  const auto series = load_cfi_series(out.cfi() / "cfi.csv");
  CHECK(series.size() == (499 - 60) / 10 + 1);
  const auto model = load_model(out.cfi() / "model.json");
  CHECK(model.loading[0] > 0);

  const auto manifest = nlohmann::json::parse(read_text(out.manifest() / "manifest.json"));
  CHECK(manifest["seeds"]["attack"] == 99);
  bool saw_cfi = false;
  for (const auto& o : manifest["outputs"]) {
    CHECK(o["path"].get<std::string>().rfind("manifest/", 0) != 0);
    saw_cfi |= o["path"] == "cfi/cfi.csv";
  }
  CHECK(saw_cfi);

  // Re-running replaces the output directory with byte-identical content.
  const std::string first = read_text(out.manifest() / "manifest.json");
  run_pipeline(cfg, {read_text(dir / "config.json"), {}}, nullptr);
  CHECK(read_text(out.manifest() / "manifest.json") == first);

  SUBCASE("more worker threads do not change the artifacts") {
    auto threaded = cfg;
    threaded.jobs = 4;
    threaded.output_dir = (dir / "out4").string();
    run_pipeline(threaded, {read_text(dir / "config.json"), {}}, nullptr);
    const auto m4 = nlohmann::json::parse(read_text(OutputLayout{threaded.output_dir}.manifest() / "manifest.json"));
    CHECK(m4["outputs"] == manifest["outputs"]);
  }
}

TEST_CASE("a failing stage quarantines its partial output") {
  const auto dir = small_world("quarantine");
  auto cfg = load_config(dir / "config.json");
  cfg.k_grid = {1, 11};  // 12 categories: k may not exceed 10
  try {
    run_pipeline(cfg, {}, nullptr);
    FAIL("expected a stage failure");
  } catch (const StageError& e) {
    CHECK(e.stage() == "attack");
    CHECK(e.exit_code() == 2);
  }
  CHECK_FALSE(fs::exists(cfg.output_dir));
  CHECK(fs::exists(fs::path(cfg.output_dir + ".failed") / "cfi" / "model.json"));

  cfg.snapshot = (dir / "nope.csv").string();
  CHECK_THROWS_AS(run_pipeline(cfg, {}, nullptr), StageError);
}

TEST_CASE("command line exit codes") {
  const auto dir = small_world("cli");
  const std::string cfg = "--config " + (dir / "config.json").string();
  CHECK(run_cli("") == 2);
  CHECK(run_cli("run") == 2);
  CHECK(run_cli("run --config " + (dir / "absent.json").string()) == 2);
  CHECK(run_cli("run " + cfg + " --set rolling.step=500") == 2);
  CHECK(run_cli("run " + cfg + " --set data.snapshot=absent.csv") == 3);
  CHECK(run_cli("run " + cfg + " --out " + (dir / "cli_out").string()) == 0);
  CHECK(fs::exists(dir / "cli_out" / "manifest" / "manifest.json"));

  // Single stages pick up where the previous ones left off.
  const std::string staged = cfg + " --out " + (dir / "staged").string();
  CHECK(run_cli("ingest " + staged) == 0);
  CHECK(run_cli("clean " + staged) == 0);
  CHECK(run_cli("networks " + staged) == 0);
  CHECK(run_cli("cfi " + staged) == 0);
  CHECK(run_cli("rcs " + staged) == 0);
  CHECK(read_text(dir / "staged" / "rcs" / "ranking.csv") == read_text(dir / "cli_out" / "rcs" / "ranking.csv"));

  const auto spec_path = dir / "spec.json";
  write_text(spec_path, serialize_synth_spec(scenario::monotone_loading(2, 5, 100)));
  CHECK(run_cli("synth --spec " + spec_path.string() + " --panel " + (dir / "gen.csv").string()) == 0);
  CHECK(identical(load_snapshot(dir / "gen.csv"), generate_panel(scenario::monotone_loading(2, 5, 100))));
}
