#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qslgd/dynamics.hpp"
#include "qslgd/gridref.hpp"
#include "qslgd/kernel.hpp"

namespace qslgd {

/// Equal-width bins on [0, 1).
struct Histogram {
  std::vector<std::size_t> counts;

  int bins() const noexcept { return static_cast<int>(counts.size()); }
  std::size_t total() const;
  double lower_edge(int b) const { return static_cast<double>(b) / bins(); }
  double upper_edge(int b) const { return static_cast<double>(b + 1) / bins(); }
};

/// Requires a torus:1 ensemble.
Histogram histogram(const Ensemble& e, int bins);

/// sum_b phat_b log(phat_b / r_b) between the binned ensemble and the
/// reference integrated over each bin; uniform reference when absent.
/// Returns +inf when a bin the ensemble occupies has zero reference mass.
double kl_to_reference(const Ensemble& e, int bins, const std::optional<grid::GridDensity>& reference = {});

/// Reference mass of each bin of an equal-width histogram.
std::vector<double> bin_masses(int bins, const std::optional<grid::GridDensity>& reference);

struct NiOptions {
  int grid_points = 4096;     // torus: dense evaluation grid
  double grid_offset = 0.0;   // torus: grid origin shift in units of the spacing
  int starts = 32;            // sphere: multi-start count
  int steps = 500;            // sphere: iterations per start
  double step = 0.05;         // sphere: initial step length
  std::uint64_t seed = 0;     // sphere: start points
};

/// Nikaido-Isoda error of the empirical pair. E(p, q') is linear in q', so
/// its supremum over distributions is attained at a point mass and
///   NI = max_y V(y, p) - min_x U(x, q).
struct NIReport {
  double value = 0.0;
  double sup_value = 0.0;  // max_y V(y, p)
  double inf_value = 0.0;  // min_x U(x, q)
  Point argmax_y;
  Point argmin_x;
  bool lower_bound = false;  // sphere estimates under-approximate the sup/inf gap
  int starts = 0;
  long iterations = 0;
  int sup_hits = 0;  // starts whose final value is within 1e-4 of the best
  int inf_hits = 0;
};

NIReport ni_error(const Ensemble& x, const Ensemble& y, const Kernel& k, const NiOptions& options = {});

/// Smallest inverse temperature from the epsilon-Nash guarantee:
///   (4/eps) log( 2 (1 - V) / V * (4 C / eps - 1) ),  delta = eps / (2 Lip),
/// with V the normalized volume of a geodesic ball of radius delta.
double beta_threshold(const Kernel& k, const ManifoldSpec& m, double eps);
double beta_threshold(const KernelConstants& c, const ManifoldSpec& m, double eps);

}  // namespace qslgd
