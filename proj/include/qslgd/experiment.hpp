#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qslgd/dynamics.hpp"
#include "qslgd/gridref.hpp"
#include "qslgd/kernel.hpp"
#include "qslgd/metrics.hpp"

namespace qslgd {

enum class Algorithm { kLgda, kQslgd };

struct KernelSpec {
  std::string type = "sine_torus";  // "sine_torus" | "poly_sphere"
  int d = 3;                        // poly_sphere ambient dimension
  std::uint64_t matrix_seed = 0;
  double scale = 1.0;

  Kernel build() const;
};

struct SweepSpec {
  std::string param;  // empty: single run
  std::vector<double> values;
  int repeats = 1;
};

/// A run/sweep description. Parsed from JSON; every key is listed in
/// README.md and unknown keys are rejected.
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kQslgd;
  KernelSpec kernel;
  RunConfig run;
  std::optional<long> inner_budget;  // when set, T = budget / k1 (qslgd) or budget (lgda)
  SweepSpec sweep;
  long record_every = 100;
  std::vector<std::string> metrics;  // "kl10" style names, "ni", "free_energy_grid"
  int kl_bins = 10;
  NiOptions ni;
  int grid_n = 256;
  int workers = 1;
  std::string output = "run.csv";

  /// Run settings for one sweep value and repeat, with the seed offset applied.
  RunConfig cell_config(std::optional<double> sweep_value, int repeat) const;
  KernelSpec cell_kernel(std::optional<double> sweep_value) const;
};

ExperimentConfig parse_experiment(std::string_view json_text);
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct ExperimentOutcome {
  std::string csv;          // one row per recorded iteration
  std::string summary_csv;  // per sweep value and metric: mean and standard error of final rows
  bool numerical_failure = false;
};

/// Runs every sweep value x repeat on `workers` threads; output bytes do not
/// depend on the worker count except for the trailing elapsed_seconds column.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, int workers);

struct OracleConfig {
  KernelSpec kernel;
  double beta = 10.0;
  int grid_n = 256;
  grid::FixedPointOptions fixed_point;
  bool pde = false;
  bool coupled = false;        // evolve the descent-ascent pair instead of the quasistatic flow
  std::string init = "bump";   // "bump" | "uniform"
  double bump_center = 0.125;
  double bump_width = 0.05;
  double t_end = 1.0;
  long pde_record_every = 100;
  std::string output = "oracle.csv";
};

OracleConfig parse_oracle(std::string_view json_text);
OracleConfig load_oracle(const std::filesystem::path& path);

struct OracleOutcome {
  std::string csv;      // x,p_star,q_star[,p_final[,q_final]]
  std::string pde_csv;  // empty unless the PDE was run
  long iterations = 0;
  double residual = 0.0;
  bool free_energy_monotone = true;
  double max_clipped = 0.0;
};

/// Throws NoConvergence from the fixed-point solve.
OracleOutcome run_oracle(const OracleConfig& cfg);

/// Bump initial density used by the oracle PDE runs.
grid::GridDensity bump_density(int n, double center, double width);

/// "%.17g"
std::string format_double(double v);

/// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// "<stem>.<suffix>" next to `output`.
std::filesystem::path sibling_path(const std::filesystem::path& output, const std::string& suffix);

}  // namespace qslgd
