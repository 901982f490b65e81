#include "qslgd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "qslgd/errors.hpp"

namespace qslgd {
namespace {

void require_circle(const Ensemble& e) {
  if (!(e.manifold() == ManifoldSpec::torus(1)))
    throw std::invalid_argument("histogram metrics need a torus:1 ensemble, got " + e.manifold().to_string());
}

struct SearchResult {
  double value;
  std::vector<double> arg;
  int hits;
  long iterations;
};

// Dense scan of f over the circle at (g + offset)/points.
template <class F>
SearchResult scan_circle(F&& f, int points, double offset, bool maximize) {
  double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (int g = 0; g < points; ++g) {
    double z = (g + offset) / points;
    z -= std::floor(z);
    const double v = f(std::span<const double>(&z, 1));
    if (maximize ? v > best : v < best) {
      best = v;
      arg = z;
    }
  }
  return {best, {arg}, 1, points};
}

// Projected gradient ascent (sign=+1) or descent (sign=-1) on the sphere from
// several random starts, halving the step whenever a move fails to improve.
template <class F, class G>
SearchResult multistart_sphere(F&& value, G&& gradient, const ManifoldSpec& m, const NiOptions& opt, double sign,
                               StreamRole role_tag) {
  NoiseStream rng(opt.seed, StreamRole::kAux, static_cast<std::uint64_t>(role_tag) + 1);
  const auto d = static_cast<std::size_t>(m.dim);
  std::vector<double> finals;
  finals.reserve(static_cast<std::size_t>(opt.starts));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> best_arg(d);
  long iterations = 0;
  std::vector<double> z(d), trial(d), g(d);
  for (int s = 0; s < opt.starts; ++s) {
    sample_uniform_into(z, m, rng);
    double current = sign * value(std::span<const double>(z));
    double step = opt.step;
    for (int it = 0; it < opt.steps; ++it) {
      gradient(std::span<const double>(z), std::span<double>(g));
      for (std::size_t i = 0; i < d; ++i) trial[i] = z[i] + sign * step * g[i];
      try {
        project_inplace(trial, m);
      } catch (const DegenerateProjection&) {
        step *= 0.5;
        continue;
      }
      const double candidate = sign * value(std::span<const double>(trial));
      if (candidate > current) {
        z.swap(trial);
        current = candidate;
      } else {
        step *= 0.5;
      }
      ++iterations;
    }
    finals.push_back(current);
    if (current > best) {
      best = current;
      best_arg = z;
    }
  }
  const int hits = static_cast<int>(std::count_if(finals.begin(), finals.end(),
                                                  [best](double v) { return best - v <= 1e-4; }));
  return {sign * best, best_arg, hits, iterations};
}

}  // namespace

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram histogram(const Ensemble& e, int bins) {
  require_circle(e);
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h{std::vector<std::size_t>(static_cast<std::size_t>(bins), 0)};
  for (double x : e.coords()) {
    auto b = static_cast<int>(x * bins);
    h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  return h;
}

std::vector<double> bin_masses(int bins, const std::optional<grid::GridDensity>& reference) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  std::vector<double> mass(static_cast<std::size_t>(bins), 1.0 / bins);
  if (!reference) return mass;
  // Exact overlap integral of the piecewise-constant reference with each bin.
  const int n = reference->size();
  std::fill(mass.begin(), mass.end(), 0.0);
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins;
    const double hi = static_cast<double>(b + 1) / bins;
    const int first = std::max(0, static_cast<int>(std::floor(lo * n)));
    const int last = std::min(n - 1, static_cast<int>(std::ceil(hi * n)));
    for (int i = first; i <= last; ++i) {
      const double overlap = std::min(hi, (i + 1.0) / n) - std::max(lo, static_cast<double>(i) / n);
      if (overlap > 0.0) mass[static_cast<std::size_t>(b)] += (*reference)[i] * overlap;
    }
  }
  return mass;
}

double kl_to_reference(const Ensemble& e, int bins, const std::optional<grid::GridDensity>& reference) {
  const Histogram h = histogram(e, bins);
  const std::vector<double> ref = bin_masses(bins, reference);
  const double n = static_cast<double>(h.total());
  double kl = 0.0;
  for (int b = 0; b < bins; ++b) {
    const std::size_t c = h.counts[static_cast<std::size_t>(b)];
    if (c == 0) continue;
    const double phat = static_cast<double>(c) / n;
    const double r = ref[static_cast<std::size_t>(b)];
    if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
    kl += phat * std::log(phat / r);
  }
  return std::max(kl, 0.0);
}

NIReport ni_error(const Ensemble& x, const Ensemble& y, const Kernel& k, const NiOptions& opt) {
  if (!(x.manifold() == k.manifold()) || !(y.manifold() == k.manifold()))
    throw std::invalid_argument("ensembles must live on the kernel manifold " + k.manifold().to_string());
  const MeanFeatures xf = k.x_features(x.coords());
  const MeanFeatures yf = k.y_features(y.coords());
  auto v_of = [&](std::span<const double> z) { return k.mean_over_x(z, xf); };
  auto u_of = [&](std::span<const double> z) { return k.mean_over_y(z, yf); };

  NIReport report;
  SearchResult sup;
  SearchResult inf;
  const ManifoldSpec& m = k.manifold();
  if (m.kind == ManifoldKind::kTorus) {
    if (m.dim != 1) throw std::invalid_argument("dense NI evaluation supports torus:1 only");
    if (opt.grid_points < 1) throw std::invalid_argument("grid_points must be >= 1");
    sup = scan_circle(v_of, opt.grid_points, opt.grid_offset, true);
    inf = scan_circle(u_of, opt.grid_points, opt.grid_offset, false);
    report.lower_bound = false;
    report.starts = 0;
  } else {
    if (opt.starts < 1 || opt.steps < 0 || !(opt.step > 0.0))
      throw std::invalid_argument("invalid multi-start settings");
    auto v_grad = [&](std::span<const double> z, std::span<double> g) { k.mean_grad_y(z, xf, g); };
    auto u_grad = [&](std::span<const double> z, std::span<double> g) { k.mean_grad_x(z, yf, g); };
    sup = multistart_sphere(v_of, v_grad, m, opt, +1.0, StreamRole::kY);
    inf = multistart_sphere(u_of, u_grad, m, opt, -1.0, StreamRole::kX);
    report.lower_bound = true;
    report.starts = opt.starts;
  }
  report.sup_value = sup.value;
  report.inf_value = inf.value;
  report.value = sup.value - inf.value;
  report.argmax_y = Point{sup.arg, m};
  report.argmin_x = Point{inf.arg, m};
  report.iterations = sup.iterations + inf.iterations;
  report.sup_hits = sup.hits;
  report.inf_hits = inf.hits;
  return report;
}

double beta_threshold(const KernelConstants& c, const ManifoldSpec& m, double eps) {
  if (!(eps > 0.0) || !(eps < 4.0 * c.bound))
    throw UndefinedBound("eps must lie in (0, 4 C_K)");
  if (!(c.lipschitz > 0.0)) throw UndefinedBound("Lipschitz constant must be positive");
  const double delta = eps / (2.0 * c.lipschitz);
  const double v = ball_volume_fraction(m, delta);
  if (!(v > 0.0 && v < 1.0)) throw UndefinedBound("ball volume fraction must lie in (0, 1)");
  return 4.0 / eps * std::log(2.0 * (1.0 - v) / v * (4.0 * c.bound / eps - 1.0));
}

double beta_threshold(const Kernel& k, const ManifoldSpec& m, double eps) {
  return beta_threshold(k.constants(), m, eps);
}

}  // namespace qslgd
