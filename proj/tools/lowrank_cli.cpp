// Command-line runner for the low-rank posterior approximation experiments.
//
//   lowrank run    --spec cfg.json [--out DIR] [--seed N] [--threads N]
//   lowrank report --results results.csv [--out DIR]
//   lowrank verify
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "acceptance/acceptance_checks.hpp"
#include "lowrank/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int threads_from_env(int fallback) {
  const char* env = std::getenv("LOWRANK_BAYES_THREADS");
  if (!env) return fallback;
  try {
    const int value = std::stoi(env);
    return value >= 1 ? value : fallback;
  } catch (const std::exception&) {
    return fallback;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimal low-rank posterior approximations for Gaussian-linear "
               "Bayesian inverse problems"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, results_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = threads_from_env(1);
  long dense_fallback = -1;

  CLI::App* cmd_run = app.add_subcommand("run", "run an experiment spec");
  cmd_run->add_option("--spec", spec_path, "experiment spec (json)")->required();
  cmd_run->add_option("--out", out_dir, "output directory (overrides the spec)");
  cmd_run->add_option("--seed", seed, "master seed (overrides the spec)")
      ->each([&seed_given](const std::string&) { seed_given = true; });
  cmd_run->add_option("--threads", threads, "worker threads");
  cmd_run->add_option("--dense-fallback-dim", dense_fallback,
                      "largest dimension for exact dense reference computations");

  CLI::App* cmd_report = app.add_subcommand("report", "summarize a results table");
  cmd_report->add_option("--results", results_path, "results.csv from a run")
      ->required();
  cmd_report->add_option("--out", out_dir, "directory for summary artifacts");

  CLI::App* cmd_verify =
      app.add_subcommand("verify", "run the acceptance suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (cmd_run->parsed()) {
      lowrank::ExperimentSpec spec = lowrank::ExperimentSpec::from_json_file(spec_path);
      if (!out_dir.empty()) spec.output_dir = out_dir;
      if (seed_given) spec.seed = seed;
      if (dense_fallback > 0) spec.dense_fallback_dim = dense_fallback;
      spec.threads = threads;
      const lowrank::RunArtifacts artifacts = lowrank::run(spec);
      std::printf("wrote %zu result rows to %s\n", artifacts.table.rows.size(),
                  spec.output_dir.c_str());
      const lowrank::ReportSummary summary =
          lowrank::report(artifacts.table, spec.output_dir);
      std::fputs(summary.text.c_str(), stdout);
      return 0;
    }
    if (cmd_report->parsed()) {
      const lowrank::ResultTable table = lowrank::ResultTable::read_csv(results_path);
      const lowrank::ReportSummary summary = lowrank::report(table, out_dir);
      std::fputs(summary.text.c_str(), stdout);
      return 0;
    }
    if (cmd_verify->parsed())
      return lowrank::acceptance::run_and_report() == 0 ? 0 : kExitNumeric;
  } catch (const lowrank::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const lowrank::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitConfig;
  } catch (const lowrank::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitConfig;
}
