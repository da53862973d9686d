#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uapbev/cli.hpp"

namespace {

void add_common(CLI::App* cmd, uapbev::cli::RunManifest& man, std::string& seeds) {
  cmd->add_option("--scenario", man.scenarios, "scenario file (repeatable)")->required();
  cmd->add_option("--seeds", seeds, "seed list, e.g. 1-20 or 1,5,9")->default_val("1");
  cmd->add_option("--out", man.out, "output directory")->required();
  cmd->add_option("--jobs", man.jobs, "parallel episodes")->default_val(1);
  cmd->add_option("--config", man.overrides, "KEY=VALUE override (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace uapbev;
  CLI::App app{"uapbev: sampling planner with uncertainty-aware BEV collision cost"};
  app.require_subcommand(1);

  cli::RunManifest run_man;
  std::string run_seeds;
  auto* run = app.add_subcommand("run", "run scenario x variant x seed episodes");
  add_common(run, run_man, run_seeds);
  run->add_option("--variant", run_man.variants, "uap | deterministic | single-pass (repeatable)")->required();
  run->add_flag("!--no-traces", run_man.write_traces, "skip per-episode trace files");

  cli::RunManifest abl_man;
  std::string abl_seeds;
  auto* abl = app.add_subcommand("ablate-barrier", "2x2 uncertainty x barrier ablation");
  add_common(abl, abl_man, abl_seeds);
  abl->add_flag("!--no-traces", abl_man.write_traces, "skip per-episode trace files");

  std::vector<std::string> traces;
  std::string cal_out;
  std::string cal_mode = "gaussian";
  auto* cal = app.add_subcommand("calibrate-noise", "fit the per-frame distance error model from traces");
  cal->add_option("traces", traces, "trace files (.jsonl)")->required();
  cal->add_option("--out", cal_out, "output directory")->required();
  cal->add_option("--mode", cal_mode, "gaussian | empirical")->check(CLI::IsMember({"gaussian", "empirical"}));

  std::vector<std::string> val_scenarios, val_overrides;
  auto* val = app.add_subcommand("validate-config", "print the effective configuration");
  val->add_option("--scenario", val_scenarios, "scenario file (repeatable)");
  val->add_option("--config", val_overrides, "KEY=VALUE override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "uapbev: error: " << e.what() << '\n';
    std::cerr << app.help();
    return 2;
  }

  try {
    cli::Logger log = cli::Logger::from_env();
    if (*run) {
      run_man.seeds = cli::parse_seeds(run_seeds);
      const auto res = cli::cmd_run(run_man, log);
      cli::write_summary_text(std::cout, res.summary);
    } else if (*abl) {
      abl_man.seeds = cli::parse_seeds(abl_seeds);
      cli::cmd_ablate_barrier(abl_man, log);
      std::ifstream table(std::filesystem::path(abl_man.out) / "ablation.txt");
      std::cout << table.rdbuf();
    } else if (*cal) {
      const auto mode = cal_mode == "empirical" ? ErrorModelMode::Empirical : ErrorModelMode::Gaussian;
      const auto res = cli::cmd_calibrate_noise(traces, cal_out, mode, log);
      write_error_model(std::cout, res.model);
    } else if (*val) {
      cli::cmd_validate_config(val_scenarios, val_overrides, std::cout);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "uapbev: error: " << msg << '\n';
    return 1;
  }
  return 0;
}
