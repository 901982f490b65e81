// qslgd: run particle experiments and the grid oracle from JSON configs.
//
//   qslgd run <config> [--output PATH] [--workers N]
//   qslgd oracle <config> [--output PATH]
//   qslgd validate <config>
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.
// QSLGD_WORKERS overrides the configured worker count.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qslgd/errors.hpp"
#include "qslgd/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 1;
constexpr int kNumerical = 2;

int env_workers(int fallback) {
  const char* raw = std::getenv("QSLGD_WORKERS");
  if (raw == nullptr || *raw == '\0') return fallback;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) throw qslgd::ConfigError("QSLGD_WORKERS", "expected a positive integer");
  return static_cast<int>(v);
}

bool is_oracle_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qslgd::ConfigError("", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  return j.is_object() && !j.contains("algorithm");
}

int cmd_run(const std::string& path, const std::string& output, int workers_flag) {
  qslgd::ExperimentConfig cfg = qslgd::load_experiment(path);
  if (!output.empty()) cfg.output = output;
  const int workers = workers_flag > 0 ? workers_flag : env_workers(cfg.workers);
  const qslgd::ExperimentOutcome out = qslgd::run_experiment(cfg, workers);
  qslgd::write_file_atomic(cfg.output, out.csv);
  qslgd::write_file_atomic(qslgd::sibling_path(cfg.output, "summary.csv"), out.summary_csv);
  std::cerr << "wrote " << cfg.output << '\n';
  if (out.numerical_failure) {
    std::cerr << "error: numerical blow-up in at least one run; see the status column\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_oracle(const std::string& path, const std::string& output) {
  qslgd::OracleConfig cfg = qslgd::load_oracle(path);
  if (!output.empty()) cfg.output = output;
  const qslgd::OracleOutcome out = qslgd::run_oracle(cfg);
  qslgd::write_file_atomic(cfg.output, out.csv);
  if (!out.pde_csv.empty()) qslgd::write_file_atomic(qslgd::sibling_path(cfg.output, "pde.csv"), out.pde_csv);
  std::cerr << "fixed point: " << out.iterations << " iterations, residual " << qslgd::format_double(out.residual)
            << '\n';
  if (!out.pde_csv.empty() && !cfg.coupled)
    std::cerr << "free energy monotone: " << (out.free_energy_monotone ? "yes" : "no") << '\n';
  std::cerr << "wrote " << cfg.output << '\n';
  return kOk;
}

int cmd_validate(const std::string& path) {
  if (is_oracle_config(path)) {
    qslgd::load_oracle(path);
    std::cout << "ok (oracle config)\n";
  } else {
    const auto cfg = qslgd::load_experiment(path);
    const std::size_t cells = std::max<std::size_t>(cfg.sweep.values.size(), 1) * cfg.sweep.repeats;
    std::cout << "ok (" << cells << " runs)\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasistatic Langevin dynamics for mixed Nash equilibria"};
  app.require_subcommand(1);

  std::string config;
  std::string output;
  int workers = 0;

  auto* run = app.add_subcommand("run", "run an experiment or sweep and write CSV");
  run->add_option("config", config, "JSON experiment config")->required();
  run->add_option("-o,--output", output, "override the output path");
  run->add_option("-w,--workers", workers, "worker threads (overrides QSLGD_WORKERS)")->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle", "solve the grid fixed point and optional PDE evolution");
  oracle->add_option("config", config, "JSON oracle config")->required();
  oracle->add_option("-o,--output", output, "override the output path");

  auto* validate = app.add_subcommand("validate", "parse and check a config without running it");
  validate->add_option("config", config, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(config, output, workers);
    if (*oracle) return cmd_oracle(config, output);
    return cmd_validate(config);
  } catch (const qslgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const qslgd::NoConvergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const qslgd::NumericalBlowUp& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
