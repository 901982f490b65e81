#include "qslgd/dynamics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "parallel.hpp"
#include "qslgd/errors.hpp"

namespace qslgd {
namespace {

enum class Side { kX, kY };

void require_on_kernel(const Ensemble& e, const Kernel& k, const char* name) {
  if (!(e.manifold() == k.manifold()))
    throw std::invalid_argument(std::string(name) + " ensemble lives on " + e.manifold().to_string() +
                                " but the kernel on " + k.manifold().to_string());
}

void require_streams(const ParticleStreams& s, const Ensemble& e) {
  if (s.size() < e.size()) throw std::invalid_argument("fewer noise streams than particles");
}

void require_step(double h, double beta) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
}

// langevin_step_inplace without the argument checks, which the callers have
// already done once per sweep. Same arithmetic, same draws.
inline void step_unchecked(std::span<double> p, bool torus, std::span<const double> drift, double h, double sigma,
                           NoiseStream& rng) {
  for (double g : drift)
    if (!std::isfinite(g)) throw NumericalBlowUp();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] += h * drift[i];
    if (sigma > 0.0) p[i] += sigma * rng.gaussian();
  }
  if (torus) {
    for (double& c : p) {
      c -= std::floor(c);
      if (c >= 1.0) c = 0.0;
    }
    return;
  }
  double n2 = 0.0;
  for (double c : p) n2 += c * c;
  const double n = std::sqrt(n2);
  if (!(n > 0.0)) throw DegenerateProjection();
  for (double& c : p) c /= n;
}

// One Langevin sweep of `pop` in place. X descends the mean gradient against
// `opposing`; Y ascends it. Each particle reads only the frozen features and
// advances only its own stream.
void sweep(Ensemble& pop, Side side, const MeanFeatures& opposing, const Kernel& k, double h, double noise,
           ParticleStreams& streams, int threads) {
  const ManifoldSpec m = pop.manifold();
  const bool torus = m.kind == ManifoldKind::kTorus;
  const double sigma = std::sqrt(2.0 * h) * noise;
  detail::parallel_for(pop.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> drift(static_cast<std::size_t>(m.dim));
    for (std::size_t i = begin; i < end; ++i) {
      auto p = pop.mutable_point(i);
      if (side == Side::kX) {
        k.mean_grad_x(p, opposing, drift);
        for (double& g : drift) g = -g;
      } else {
        k.mean_grad_y(p, opposing, drift);
      }
      step_unchecked(p, torus, drift, h, sigma, streams[i]);
    }
  });
}

}  // namespace

Ensemble::Ensemble(ManifoldSpec m, std::vector<double> flat_coords)
    : manifold_(m), coords_(std::move(flat_coords)) {
  const auto d = static_cast<std::size_t>(m.dim);
  if (coords_.empty() || coords_.size() % d != 0)
    throw std::invalid_argument("ensemble needs a positive multiple of " + std::to_string(d) + " coordinates");
  if (!valid()) throw std::invalid_argument("ensemble point violates the " + m.to_string() + " invariant");
}

Ensemble Ensemble::from_points(std::span<const Point> points) {
  if (points.empty()) throw std::invalid_argument("ensemble needs at least one point");
  const ManifoldSpec m = points.front().manifold;
  std::vector<double> flat;
  flat.reserve(points.size() * static_cast<std::size_t>(m.dim));
  for (const auto& p : points) {
    if (!(p.manifold == m)) throw std::invalid_argument("ensemble points must share one manifold");
    flat.insert(flat.end(), p.coords.begin(), p.coords.end());
  }
  return Ensemble(m, std::move(flat));
}

Point Ensemble::at(std::size_t i) const {
  const auto p = point(i);
  return Point{{p.begin(), p.end()}, manifold_};
}

bool Ensemble::valid(double tol) const {
  for (std::size_t i = 0; i < size(); ++i)
    if (!satisfies_manifold(point(i), manifold_, tol)) return false;
  return true;
}

SnapshotBuffer::SnapshotBuffer(int k2, std::size_t n_y, Ensemble points)
    : k2_(k2), n_y_(n_y), points_(std::move(points)) {
  if (k2 < 1) throw std::invalid_argument("snapshot count must be >= 1");
  if (points_.size() != static_cast<std::size_t>(k2) * n_y)
    throw std::invalid_argument("snapshot buffer must hold exactly k2 * n_y points");
}

Ensemble initialize(const ManifoldSpec& m, const InitSpec& init, std::size_t n, ParticleStreams& streams) {
  if (n == 0) throw std::invalid_argument("ensemble needs at least one particle");
  if (streams.size() < n) throw std::invalid_argument("fewer noise streams than particles");
  const auto d = static_cast<std::size_t>(m.dim);
  std::vector<double> flat(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> out(flat.data() + i * d, d);
    if (init.kind == InitSpec::Kind::kUniform)
      sample_uniform_into(out, m, streams[i]);
    else
      sample_box_into(out, m, init.box, streams[i]);
  }
  return Ensemble(m, std::move(flat));
}

void RunConfig::validate(bool qslgd) const {
  if (n_x < 1) throw ConfigError("n_x", "must be >= 1");
  if (n_y < 1) throw ConfigError("n_y", "must be >= 1");
  if (T < 1) throw ConfigError("T", "must be >= 1");
  if (qslgd) {
    if (k0 < 0) throw ConfigError("k0", "must be >= 0");
    if (k1 < 0) throw ConfigError("k1", "must be >= 0");
    if (k2 < 1) throw ConfigError("k2", "must be >= 1");
  }
  if (!(h_x > 0.0) || !std::isfinite(h_x)) throw ConfigError("h_x", "must be positive");
  if (!(h_y > 0.0) || !std::isfinite(h_y)) throw ConfigError("h_y", "must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
}

double noise_coefficient(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  return std::isinf(beta) ? 0.0 : std::sqrt(1.0 / beta);
}

std::pair<Ensemble, Ensemble> lgda_step(const Ensemble& x, const Ensemble& y, const Kernel& k, double h, double beta,
                                        ParticleStreams& x_streams, ParticleStreams& y_streams, int threads) {
  require_on_kernel(x, k, "X");
  require_on_kernel(y, k, "Y");
  require_streams(x_streams, x);
  require_streams(y_streams, y);
  require_step(h, beta);
  const double noise = noise_coefficient(beta);
  const MeanFeatures xf = k.x_features(x.coords());
  const MeanFeatures yf = k.y_features(y.coords());
  Ensemble nx = x;
  Ensemble ny = y;
  sweep(nx, Side::kX, yf, k, h, noise, x_streams, threads);
  sweep(ny, Side::kY, xf, k, h, noise, y_streams, threads);
  return {std::move(nx), std::move(ny)};
}

std::pair<Ensemble, Ensemble> lgda_step_alternating(const Ensemble& x, const Ensemble& y, const Kernel& k, double h,
                                                    double beta, ParticleStreams& x_streams,
                                                    ParticleStreams& y_streams, int threads) {
  require_on_kernel(x, k, "X");
  require_on_kernel(y, k, "Y");
  require_streams(x_streams, x);
  require_streams(y_streams, y);
  require_step(h, beta);
  const double noise = noise_coefficient(beta);
  Ensemble nx = x;
  sweep(nx, Side::kX, k.y_features(y.coords()), k, h, noise, x_streams, threads);
  Ensemble ny = y;
  sweep(ny, Side::kY, k.x_features(nx.coords()), k, h, noise, y_streams, threads);
  return {std::move(nx), std::move(ny)};
}

Ensemble inner_equilibrate(const Ensemble& x, const Ensemble& y, long steps, const Kernel& k, double h_y, double beta,
                           ParticleStreams& y_streams, int threads) {
  if (steps < 0) throw std::invalid_argument("inner step count must be >= 0");
  require_on_kernel(x, k, "X");
  require_on_kernel(y, k, "Y");
  require_streams(y_streams, y);
  require_step(h_y, beta);
  Ensemble out = y;
  if (steps == 0) return out;
  const double noise = noise_coefficient(beta);
  const MeanFeatures xf = k.x_features(x.coords());
  for (long s = 0; s < steps; ++s) sweep(out, Side::kY, xf, k, h_y, noise, y_streams, threads);
  return out;
}

std::pair<Ensemble, SnapshotBuffer> collect_snapshots(const Ensemble& x, const Ensemble& y, long k2, const Kernel& k,
                                                      double h_y, double beta, ParticleStreams& y_streams,
                                                      int threads) {
  if (k2 < 1) throw std::invalid_argument("k2 must be >= 1");
  require_on_kernel(x, k, "X");
  require_on_kernel(y, k, "Y");
  require_streams(y_streams, y);
  require_step(h_y, beta);
  const double noise = noise_coefficient(beta);
  const MeanFeatures xf = k.x_features(x.coords());
  Ensemble cur = y;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(k2) * y.coords().size());
  for (long s = 0; s < k2; ++s) {
    sweep(cur, Side::kY, xf, k, h_y, noise, y_streams, threads);
    flat.insert(flat.end(), cur.coords().begin(), cur.coords().end());
  }
  SnapshotBuffer buffer(static_cast<int>(k2), y.size(), Ensemble(y.manifold(), std::move(flat)));
  return {std::move(cur), std::move(buffer)};
}

Ensemble outer_step(const Ensemble& x, const SnapshotBuffer& buffer, const Kernel& k, double h_x, double beta,
                    ParticleStreams& x_streams, int threads) {
  require_on_kernel(x, k, "X");
  require_on_kernel(buffer.points(), k, "snapshot");
  require_streams(x_streams, x);
  require_step(h_x, beta);
  Ensemble out = x;
  sweep(out, Side::kX, k.y_features(buffer.points().coords()), k, h_x, noise_coefficient(beta), x_streams, threads);
  return out;
}

RunResult run_qslgd(const RunConfig& cfg, const Kernel& k, const Observer& observer) {
  cfg.validate(true);
  const ManifoldSpec& m = k.manifold();
  ParticleStreams xs(cfg.seed, StreamRole::kX, cfg.n_x);
  ParticleStreams ys(cfg.seed, StreamRole::kY, cfg.n_y);
  Ensemble x = initialize(m, cfg.init_x, cfg.n_x, xs);
  Ensemble y = initialize(m, cfg.init_y, cfg.n_y, ys);
  RunStats stats;

  try {
    y = inner_equilibrate(x, y, cfg.k0, k, cfg.h_y, cfg.beta, ys, cfg.threads);
  } catch (const NumericalBlowUp&) {
    throw NumericalBlowUp(0);
  }
  stats.inner_updates += cfg.k0;
  if (observer) observer(0, x, y);

  for (long t = 1; t <= cfg.T; ++t) {
    try {
      y = inner_equilibrate(x, y, cfg.k1, k, cfg.h_y, cfg.beta, ys, cfg.threads);
      auto [y_next, buffer] = collect_snapshots(x, y, cfg.k2, k, cfg.h_y, cfg.beta, ys, cfg.threads);
      x = outer_step(x, buffer, k, cfg.h_x, cfg.beta, xs, cfg.threads);
      y = std::move(y_next);
    } catch (const NumericalBlowUp&) {
      throw NumericalBlowUp(t);
    }
    stats.inner_updates += cfg.k1 + cfg.k2;
    stats.outer_updates += 1;
    if (observer) observer(t, x, y);
  }
  return {std::move(x), std::move(y), stats};
}

RunResult run_lgda(const RunConfig& cfg, const Kernel& k, const Observer& observer) {
  cfg.validate(false);
  if (cfg.h_x != cfg.h_y) throw ConfigError("h_y", "LGDA uses a single step size; h_x and h_y must match");
  const ManifoldSpec& m = k.manifold();
  ParticleStreams xs(cfg.seed, StreamRole::kX, cfg.n_x);
  ParticleStreams ys(cfg.seed, StreamRole::kY, cfg.n_y);
  Ensemble x = initialize(m, cfg.init_x, cfg.n_x, xs);
  Ensemble y = initialize(m, cfg.init_y, cfg.n_y, ys);
  RunStats stats;
  if (observer) observer(0, x, y);

  for (long t = 1; t <= cfg.T; ++t) {
    try {
      auto [nx, ny] = cfg.lgda_update == LgdaUpdate::kSimultaneous
                          ? lgda_step(x, y, k, cfg.h_x, cfg.beta, xs, ys, cfg.threads)
                          : lgda_step_alternating(x, y, k, cfg.h_x, cfg.beta, xs, ys, cfg.threads);
      x = std::move(nx);
      y = std::move(ny);
    } catch (const NumericalBlowUp&) {
      throw NumericalBlowUp(t);
    }
    stats.inner_updates += 1;
    stats.outer_updates += 1;
    if (observer) observer(t, x, y);
  }
  return {std::move(x), std::move(y), stats};
}

}  // namespace qslgd
