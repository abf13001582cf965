// Batch command line for the fragility pipeline.
//
//   fragility run --config fixtures/config.json [--set attack.mc_draws=50] [--out dir] [--jobs N]
//   fragility <stage> --config ...     (ingest, clean, networks, cfi, rcs, attack, regress, robustness)
//   fragility synth --spec spec.json --panel out.csv [--controls controls.csv]
//
// Exit codes: 0 success, 2 validation error, 3 data error, 4 convergence error, 1 anything else.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "fragility/pipeline.hpp"
#include "fragility/synthgen.hpp"

using namespace fragility;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  int jobs = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key, e.g. rolling.window=90");
  cmd->add_option("-o,--out", c.out, "output directory (overrides output_dir)");
  cmd->add_option("-j,--jobs", c.jobs, "worker threads (0 = all cores)");
}

PipelineConfig load(const Common& c, RunInputs* inputs = nullptr) {
  std::vector<std::string> overrides = c.overrides;
  if (!c.out.empty()) overrides.push_back("output_dir=\"" + c.out + "\"");
  if (c.jobs >= 0) overrides.push_back("jobs=" + std::to_string(c.jobs));
  if (inputs) {
    std::ifstream in(c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    inputs->config_text = ss.str();
    inputs->overrides = c.overrides;  // --out and --jobs do not change results
  }
  return load_config(c.config_path, overrides);
}

std::vector<WindowNetwork> rebuild_networks(const PipelineConfig& cfg, const CleanOutput& clean, Diagnostics* d) {
  return build_networks(clean.returns, cfg.rolling_config(), cfg.estimator, cfg.glasso_rho, cfg.metric_options(),
                        cfg.jobs, d);
}

std::vector<RcsWindow> recompute_rcs(const PipelineConfig& cfg, const CfiModel& model,
                                     const std::vector<WindowNetwork>& nets) {
  std::vector<RcsWindow> out;
  for (const auto& n : nets) {
    auto opt = cfg.metric_options();
    if (cfg.rcs_frozen_n) opt.frozen_n = n.net.size();
    out.push_back(rcs_window(model, n.net, cfg.rcs_epsilon, opt));
  }
  return out;
}

void print_warnings(const Diagnostics& d) {
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation fragility indicator and risk contribution scores for DeFi TVL panels"};
  app.require_subcommand(1);

  Common common;
  std::map<std::string, CLI::App*> stages;
  for (const char* name : {"run", "ingest", "clean", "networks", "cfi", "rcs", "attack", "regress", "robustness"}) {
    auto* cmd = app.add_subcommand(name, std::string("pipeline stage: ") + name);
    add_common(cmd, common);
    stages[name] = cmd;
  }
  stages["run"]->description("run every stage into the output directory and write a manifest");

  std::string spec_path, panel_path, controls_path;
  auto* synth = app.add_subcommand("synth", "generate a synthetic panel from a spec file");
  synth->add_option("--spec", spec_path, "synthetic spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--panel", panel_path, "snapshot file to write")->required();
  synth->add_option("--controls", controls_path, "also write a market controls CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Diagnostics diag;
  try {
    if (synth->parsed()) {
      const auto spec = load_synth_spec(spec_path);
      save_snapshot(generate_panel(spec), panel_path);
      if (!controls_path.empty()) save_controls(generate_controls(spec), controls_path);
      return 0;
    }
    if (stages["run"]->parsed()) {
      RunInputs inputs;
      const auto cfg = load(common, &inputs);
      run_pipeline(cfg, inputs, &diag);
      print_warnings(diag);
      std::cout << "wrote " << cfg.output_dir << "\n";
      return 0;
    }

    const auto cfg = load(common);
    const OutputLayout out{cfg.output_dir};
    if (stages["ingest"]->parsed()) {
      const auto panel = stage_ingest(cfg, out, &diag);
      std::cout << panel.categories.size() << " categories x " << panel.dates.size() << " days\n";
    } else if (stages["clean"]->parsed()) {
      const auto clean = stage_clean(cfg, load_stage_panel(out), out, &diag);
      std::cout << clean.flags.size() << " anomaly flags; " << clean.returns.categories.size()
                << " categories retained\n";
    } else if (stages["networks"]->parsed()) {
      const auto nets = stage_networks(cfg, load_stage_clean(out), out, &diag);
      std::cout << nets.size() << " windows\n";
    } else if (stages["cfi"]->parsed()) {
      const auto [model, series] = stage_cfi(cfg, load_metrics_series(out.networks() / "metrics.csv"), out);
      std::cout << "PC1 variance share " << model.pc1_variance_share << "\n";
    } else if (stages["rcs"]->parsed()) {
      const auto clean = load_stage_clean(out);
      stage_rcs(cfg, load_model(out.cfi() / "model.json"), rebuild_networks(cfg, clean, &diag), clean.panel, out,
                &diag);
    } else if (stages["attack"]->parsed()) {
      const auto clean = load_stage_clean(out);
      const auto model = load_model(out.cfi() / "model.json");
      const auto nets = rebuild_networks(cfg, clean, &diag);
      stage_attack(cfg, model, nets, recompute_rcs(cfg, model, nets), load_cfi_series(out.cfi() / "cfi.csv"), out,
                   &diag);
    } else if (stages["regress"]->parsed()) {
      stage_regress(cfg, load_cfi_series(out.cfi() / "cfi.csv"), load_stage_clean(out).panel, out, &diag);
    } else if (stages["robustness"]->parsed()) {
      const auto rep = stage_robustness(cfg, load_stage_clean(out).returns, out, &diag);
      for (const auto& p : rep.correlations) {
        std::cout << p.family << " " << p.a << " ~ " << p.b << ": " << p.correlation << "\n";
      }
    }
    print_warnings(diag);
    return 0;
  } catch (const Error& e) {
    print_warnings(diag);
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    print_warnings(diag);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
