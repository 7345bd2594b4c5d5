// lyapdoa: sampling-based domain-of-attraction estimation from the command line.
//
// Precedence of settings: --set key=value  >  config file  >  built-in defaults.
// Output directory: --out  >  output.dir  >  $LYAPDOA_OUTPUT_DIR  >  ./lyapdoa_out.

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lyapdoa/cli.hpp"

namespace {

struct Globals {
  unsigned threads = 0;
  bool verbose = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, lyapdoa::cli::CommonArgs& a, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", a.config, "key-value config file");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("-o,--out", a.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace lyapdoa::cli;
  CLI::App app{"Lyapunov-based domain-of-attraction estimation from trajectory samples"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-t,--threads", g.threads, "worker threads (default: logical cores)");
  app.add_flag("-v,--verbose", g.verbose, "progress messages");
  app.add_flag("-q,--quiet", g.quiet, "errors only");

  CommonArgs common;
  StageArgs stage;
  std::vector<std::string> rows;

  auto* run = app.add_subcommand("run", "sample, learn and verify until certified, then measure the estimate");
  add_common(run, common, true);

  auto* sample = app.add_subcommand("sample", "label the grid by simulation (dataset.csv + dataset.json)");
  add_common(sample, common, true);

  auto* learn = app.add_subcommand("learn", "solve the learner LP on a dataset (candidate.json)");
  add_common(learn, common, false);
  learn->add_option("--dataset", stage.dataset, "dataset CSV from `sample`")->required()->check(CLI::ExistingFile);
  learn->add_option("--d", stage.d, "lift order (overrides lift.d)")->check(CLI::PositiveNumber);
  learn->add_option("--counterexamples", stage.counterexamples, "CSV of extra stable-set points")
      ->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "search for violations of a candidate (exit 2 if not certified)");
  add_common(verify, common, false);
  verify->add_option("--candidate", stage.candidate, "candidate JSON")->required()->check(CLI::ExistingFile);
  verify->add_option("--dataset", stage.dataset, "dataset CSV (system, ROI and grid)")->check(CLI::ExistingFile);

  auto* vol = app.add_subcommand("volume", "Monte Carlo volume of {V <= 1} and the simulated true DOA volume");
  add_common(vol, common, false);
  vol->add_option("--candidate", stage.candidate, "candidate JSON")->required()->check(CLI::ExistingFile);
  vol->add_option("--dataset", stage.dataset, "dataset CSV (system and ROI)")->check(CLI::ExistingFile);

  auto* exp = app.add_subcommand("export", "contour of {V = 1} on a 2-D slice (contour.csv)");
  add_common(exp, common, false);
  exp->add_option("--candidate", stage.candidate, "candidate JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--dataset", stage.dataset, "dataset CSV (system and ROI)")->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "replay the benchmark rows (sys5d is slow: about an hour)");
  add_common(bench, common, false);
  bench->add_option("--row", rows, "vdp2, ex2_2d, ex3_2d, sys3d or sys5d; repeatable (default: all but sys5d)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  lyapdoa::set_thread_count(g.threads);
  lyapdoa::set_log_level(g.quiet ? lyapdoa::LogLevel::Quiet
                                 : (g.verbose ? lyapdoa::LogLevel::Info : lyapdoa::LogLevel::Warn));
  try {
    if (*run) return cmd_run(common);
    if (*sample) return cmd_sample(common);
    if (*learn) return cmd_learn(common, stage);
    if (*verify) return cmd_verify(common, stage);
    if (*vol) return cmd_volume(common, stage);
    if (*exp) return cmd_export(common, stage);
    if (*bench) return cmd_bench(common, rows);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
