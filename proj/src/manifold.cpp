#include "qslgd/manifold.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qslgd/errors.hpp"

namespace qslgd {
namespace {

double wrap_unit(double x) {
  double r = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  return r >= 1.0 ? 0.0 : r;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

void require_dim(std::span<const double> coords, const ManifoldSpec& m) {
  if (static_cast<int>(coords.size()) != m.dim)
    throw std::invalid_argument("coordinate count " + std::to_string(coords.size()) + " does not match " +
                                m.to_string());
}

}  // namespace

ManifoldSpec ManifoldSpec::torus(int d) {
  if (d < 1) throw std::invalid_argument("torus dimension must be >= 1");
  return {ManifoldKind::kTorus, d};
}

ManifoldSpec ManifoldSpec::sphere(int d) {
  if (d < 2) throw std::invalid_argument("sphere ambient dimension must be >= 2");
  return {ManifoldKind::kSphere, d};
}

ManifoldSpec ManifoldSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw ConfigError("manifold", "expected \"torus:d\" or \"sphere:d\", got \"" + std::string(text) + "\"");
  const auto name = text.substr(0, colon);
  const auto num = text.substr(colon + 1);
  int d = 0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), d);
  if (ec != std::errc{} || ptr != num.data() + num.size())
    throw ConfigError("manifold", "bad dimension in \"" + std::string(text) + "\"");
  try {
    if (name == "torus") return torus(d);
    if (name == "sphere") return sphere(d);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("manifold", e.what());
  }
  throw ConfigError("manifold", "unknown manifold \"" + std::string(name) + "\"");
}

std::string ManifoldSpec::to_string() const {
  return (kind == ManifoldKind::kTorus ? "torus:" : "sphere:") + std::to_string(dim);
}

double ManifoldSpec::total_measure() const {
  if (kind == ManifoldKind::kTorus) return 1.0;
  // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2)
  const double half = 0.5 * dim;
  return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

bool satisfies_manifold(std::span<const double> coords, const ManifoldSpec& m, double tol) {
  if (static_cast<int>(coords.size()) != m.dim) return false;
  if (m.kind == ManifoldKind::kTorus)
    return std::all_of(coords.begin(), coords.end(), [](double c) { return c >= 0.0 && c < 1.0; });
  return std::abs(norm2(coords) - 1.0) <= tol;
}

bool Point::valid(double tol) const { return satisfies_manifold(coords, manifold, tol); }

void project_inplace(std::span<double> coords, const ManifoldSpec& m) {
  require_dim(coords, m);
  if (m.kind == ManifoldKind::kTorus) {
    for (double& c : coords) c = wrap_unit(c);
    return;
  }
  const double n = norm2(coords);
  if (!(n > 0.0)) throw DegenerateProjection();
  for (double& c : coords) c /= n;
}

Point project(std::span<const double> raw, const ManifoldSpec& m) {
  Point p{{raw.begin(), raw.end()}, m};
  project_inplace(p.coords, m);
  return p;
}

void sample_uniform_into(std::span<double> out, const ManifoldSpec& m, NoiseStream& rng) {
  require_dim(out, m);
  if (m.kind == ManifoldKind::kTorus) {
    for (double& c : out) c = rng.uniform();
    return;
  }
  for (;;) {
    for (double& c : out) c = rng.gaussian();
    if (norm2(out) > 0.0) break;
  }
  project_inplace(out, m);
}

Point sample_uniform(const ManifoldSpec& m, NoiseStream& rng) {
  Point p{std::vector<double>(m.dim), m};
  sample_uniform_into(p.coords, m, rng);
  return p;
}

void sample_box_into(std::span<double> out, const ManifoldSpec& m, const Box& box, NoiseStream& rng) {
  require_dim(out, m);
  if (m.kind != ManifoldKind::kTorus) throw std::invalid_argument("box initialization requires a torus");
  if (static_cast<int>(box.lo.size()) != m.dim || static_cast<int>(box.hi.size()) != m.dim)
    throw std::invalid_argument("box dimension does not match " + m.to_string());
  for (int i = 0; i < m.dim; ++i) {
    if (!(box.lo[i] >= 0.0 && box.lo[i] < box.hi[i] && box.hi[i] <= 1.0))
      throw std::invalid_argument("box bounds must satisfy 0 <= lo < hi <= 1");
    out[i] = wrap_unit(box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform());
  }
}

Point sample_box(const ManifoldSpec& m, const Box& box, NoiseStream& rng) {
  Point p{std::vector<double>(m.dim), m};
  sample_box_into(p.coords, m, box, rng);
  return p;
}

void langevin_step_inplace(std::span<double> coords, const ManifoldSpec& m, std::span<const double> drift,
                           double step, double noise_coeff, NoiseStream& rng) {
  require_dim(coords, m);
  if (drift.size() != coords.size()) throw std::invalid_argument("drift dimension mismatch");
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  if (!(noise_coeff >= 0.0)) throw std::invalid_argument("noise coefficient must be nonnegative");
  for (double g : drift)
    if (!std::isfinite(g)) throw NumericalBlowUp();

  const double sigma = std::sqrt(2.0 * step) * noise_coeff;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    coords[i] += step * drift[i];
    if (sigma > 0.0) coords[i] += sigma * rng.gaussian();
  }
  project_inplace(coords, m);
}

Point langevin_step(const Point& p, std::span<const double> drift, double step, double noise_coeff,
                    NoiseStream& rng) {
  Point out = p;
  langevin_step_inplace(out.coords, out.manifold, drift, step, noise_coeff, rng);
  return out;
}

double ball_volume_fraction(const ManifoldSpec& m, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("ball radius must be positive");
  if (m.kind == ManifoldKind::kTorus) {
    if (m.dim == 1) return std::min(2.0 * delta, 1.0);
    if (delta >= 0.5 * std::sqrt(static_cast<double>(m.dim))) return 1.0;
    if (delta > 0.5)
      throw std::domain_error("ball of radius > 1/2 overlaps itself on " + m.to_string());
    const double half = 0.5 * m.dim;
    return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0) * std::pow(delta, m.dim);
  }
  // Cap of geodesic radius delta on S^{d-1}: int_0^delta sin^{d-2} / int_0^pi sin^{d-2}.
  if (delta >= std::numbers::pi) return 1.0;
  const int power = m.dim - 2;
  auto density = [power](double theta) { return std::pow(std::sin(theta), power); };
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double cap = Quad::integrate(density, 0.0, delta, 15, 1e-14);
  const double whole = Quad::integrate(density, 0.0, std::numbers::pi, 15, 1e-14);
  return std::clamp(cap / whole, 0.0, 1.0);
}

double torus_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(a[i] - b[i]);
    const double wrapped = std::min(diff, 1.0 - diff);
    s += wrapped * wrapped;
  }
  return std::sqrt(s);
}

double sphere_distance(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

double distance(const Point& a, const Point& b) {
  if (!(a.manifold == b.manifold)) throw std::invalid_argument("points live on different manifolds");
  return a.manifold.kind == ManifoldKind::kTorus ? torus_distance(a.coords, b.coords)
                                                 : sphere_distance(a.coords, b.coords);
}

}  // namespace qslgd
