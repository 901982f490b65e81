#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "qslgd/kernel.hpp"
#include "qslgd/manifold.hpp"
#include "qslgd/rng.hpp"

namespace qslgd {

/// A population of particles on one manifold, stored as flat row-major
/// coordinates. The empirical measure approximates p_t (X) or q_t (Y).
class Ensemble {
 public:
  /// Validates the manifold invariant for every point.
  Ensemble(ManifoldSpec m, std::vector<double> flat_coords);
  static Ensemble from_points(std::span<const Point> points);

  const ManifoldSpec& manifold() const noexcept { return manifold_; }
  int dim() const noexcept { return manifold_.dim; }
  std::size_t size() const noexcept { return coords_.size() / static_cast<std::size_t>(manifold_.dim); }

  std::span<const double> coords() const noexcept { return coords_; }
  std::span<const double> point(std::size_t i) const { return std::span<const double>(coords_).subspan(i * dim(), dim()); }
  /// Mutable view; callers must keep the point on the manifold.
  std::span<double> mutable_point(std::size_t i) { return std::span<double>(coords_).subspan(i * dim(), dim()); }
  Point at(std::size_t i) const;

  bool valid(double tol = 1e-12) const;

  bool operator==(const Ensemble&) const = default;

 private:
  ManifoldSpec manifold_;
  std::vector<double> coords_;
};

/// The k2 * n_y snapshot particles used by one outer step; index
/// (s-1) * n_y + i holds particle i after snapshot step s.
class SnapshotBuffer {
 public:
  SnapshotBuffer(int k2, std::size_t n_y, Ensemble points);

  int snapshots() const noexcept { return k2_; }
  std::size_t per_snapshot() const noexcept { return n_y_; }
  const Ensemble& points() const noexcept { return points_; }

 private:
  int k2_;
  std::size_t n_y_;
  Ensemble points_;
};

struct InitSpec {
  enum class Kind { kUniform, kBox };
  Kind kind = Kind::kUniform;
  Box box;

  static InitSpec uniform() { return {}; }
  static InitSpec sub_box(std::vector<double> lo, std::vector<double> hi) {
    return {Kind::kBox, Box{std::move(lo), std::move(hi)}};
  }
};

/// Ensemble of n i.i.d. draws; particle i uses streams[i].
Ensemble initialize(const ManifoldSpec& m, const InitSpec& init, std::size_t n, ParticleStreams& streams);

enum class LgdaUpdate {
  kSimultaneous,  // both drifts from the pre-update ensembles
  kAlternating,   // X first, then Y against the updated X
};

struct RunConfig {
  std::size_t n_x = 1000;
  std::size_t n_y = 1000;
  long k0 = 1000;
  long k1 = 5;
  long k2 = 1;
  long T = 1000;
  double h_x = 0.01;
  double h_y = 0.01;
  double beta = 100.0;  // +inf switches the noise off
  std::uint64_t seed = 0;
  InitSpec init_x = InitSpec::uniform();
  InitSpec init_y = InitSpec::uniform();
  LgdaUpdate lgda_update = LgdaUpdate::kAlternating;
  int threads = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate(bool qslgd) const;
};

struct RunStats {
  std::int64_t inner_updates = 0;  // Y-ensemble sweeps (QSLGD inner loop)
  std::int64_t outer_updates = 0;  // X-ensemble sweeps
};

struct RunResult {
  Ensemble x;
  Ensemble y;
  RunStats stats;
};

/// Called once after initialization (iteration 0) and after every outer iteration.
using Observer = std::function<void(std::int64_t outer_iter, const Ensemble& x, const Ensemble& y)>;

/// sqrt(1/beta), zero for beta = +inf.
double noise_coefficient(double beta);

/// One step of the simultaneous Langevin gradient descent-ascent update.
std::pair<Ensemble, Ensemble> lgda_step(const Ensemble& x, const Ensemble& y, const Kernel& k, double h, double beta,
                                        ParticleStreams& x_streams, ParticleStreams& y_streams, int threads = 1);

/// Gauss-Seidel variant: X moves first, Y then sees the updated X.
std::pair<Ensemble, Ensemble> lgda_step_alternating(const Ensemble& x, const Ensemble& y, const Kernel& k, double h,
                                                    double beta, ParticleStreams& x_streams,
                                                    ParticleStreams& y_streams, int threads = 1);

/// `steps` ascent updates of Y against the frozen X.
Ensemble inner_equilibrate(const Ensemble& x, const Ensemble& y, long steps, const Kernel& k, double h_y, double beta,
                           ParticleStreams& y_streams, int threads = 1);

/// k2 further ascent updates, recording Y after each.
std::pair<Ensemble, SnapshotBuffer> collect_snapshots(const Ensemble& x, const Ensemble& y, long k2, const Kernel& k,
                                                      double h_y, double beta, ParticleStreams& y_streams,
                                                      int threads = 1);

/// Descent update of X against the snapshot measure.
Ensemble outer_step(const Ensemble& x, const SnapshotBuffer& buffer, const Kernel& k, double h_x, double beta,
                    ParticleStreams& x_streams, int threads = 1);

/// Quasistatic Langevin gradient descent: k0 warm-up inner steps, then T outer
/// iterations of (k1 inner steps, k2 snapshot steps, one outer step).
RunResult run_qslgd(const RunConfig& cfg, const Kernel& k, const Observer& observer = {});

/// T Langevin descent-ascent iterations (k0, k1, k2 unused).
RunResult run_lgda(const RunConfig& cfg, const Kernel& k, const Observer& observer = {});

}  // namespace qslgd
