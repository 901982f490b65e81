#include "qslgd/gridref.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qslgd/errors.hpp"

namespace qslgd::grid {
namespace {

using ConstVec = Eigen::Map<const Eigen::VectorXd>;

ConstVec as_vec(const std::vector<double>& v) { return ConstVec(v.data(), static_cast<Eigen::Index>(v.size())); }

void require_same_size(int a, int b) {
  if (a != b) throw std::invalid_argument("grid sizes differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

void require_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive and finite");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Face slopes (f_{i+1} - f_i)/dx on the periodic grid; entry i is face i+1/2.
std::vector<double> face_slopes(const GridFunction& f, double dx) {
  const std::size_t n = f.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (f[(i + 1) % n] - f[i]) / dx;
  return s;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct AdvanceResult {
  std::vector<double> values;
  double clipped = 0.0;
};

// Explicit conservative update with flux
//   F_{i+1/2} = -pbar (dPsi)_{i+1/2} - beta^-1 (dp)_{i+1/2}.
AdvanceResult advance(const std::vector<double>& p, const std::vector<double>& slopes, double beta, double dt) {
  const std::size_t n = p.size();
  const double dx = 1.0 / static_cast<double>(n);
  const double diffusion = 1.0 / beta;
  std::vector<double> flux(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = (i + 1) % n;
    const double face = 0.5 * (p[i] + p[r]);
    flux[i] = -face * slopes[i] - diffusion * (p[r] - p[i]) / dx;
  }
  AdvanceResult out;
  out.values.resize(n);
  const double ratio = dt / dx;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t l = (i + n - 1) % n;
    out.values[i] = p[i] - ratio * (flux[i] - flux[l]);
  }
  double negative = 0.0;
  for (double& v : out.values) {
    if (v < 0.0) {
      negative -= v;
      v = 0.0;
    }
  }
  if (negative > 0.0) {
    out.clipped = negative * dx;
    const double mass = std::accumulate(out.values.begin(), out.values.end(), 0.0) * dx;
    for (double& v : out.values) v /= mass;
  }
  return out;
}

double resolve_dt(std::optional<double> dt, double limit) {
  if (!dt) return 0.9 * limit;
  if (!(*dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (*dt > limit) throw CflViolation(*dt, limit);
  return *dt;
}

}  // namespace

GridDensity::GridDensity(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("grid density needs at least one cell");
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("grid density values must be finite and >= 0");
  const double m = mass();
  if (std::abs(m - 1.0) > 1e-12) throw std::invalid_argument("grid density mass " + format_double(m) + " != 1");
}

GridDensity GridDensity::uniform(int n) {
  if (n < 1) throw std::invalid_argument("grid needs at least one cell");
  return GridDensity(std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

GridDensity GridDensity::normalized(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("grid density needs at least one cell");
  const double dx = 1.0 / static_cast<double>(values.size());
  double total = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("grid density values must be finite and >= 0");
    total += v;
  }
  if (!(total > 0.0)) throw std::invalid_argument("cannot normalize a zero density");
  const double scale = 1.0 / (total * dx);
  for (double& v : values) v *= scale;
  return GridDensity(std::move(values));
}

double GridDensity::mass() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) * cell_width();
}

GridKernel::GridKernel(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() < 1 || matrix_.rows() != matrix_.cols())
    throw std::invalid_argument("grid kernel must be a nonempty square matrix");
  if (!matrix_.allFinite()) throw std::invalid_argument("grid kernel entries must be finite");
}

GridKernel GridKernel::from_function(int n, const std::function<double(double, double)>& k) {
  if (n < 1) throw std::invalid_argument("grid needs at least one cell");
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = k((i + 0.5) / n, (j + 0.5) / n);
  return GridKernel(std::move(m));
}

GridKernel GridKernel::from_kernel(const Kernel& k, int n) {
  if (!(k.manifold() == ManifoldSpec::torus(1)))
    throw std::invalid_argument("grid oracle supports kernels on torus:1 only");
  return from_function(n, [&k](double x, double y) {
    return k.eval(std::span<const double>(&x, 1), std::span<const double>(&y, 1));
  });
}

GridKernel GridKernel::constant(int n, double c) {
  if (n < 1) throw std::invalid_argument("grid needs at least one cell");
  return GridKernel(Eigen::MatrixXd::Constant(n, n, c));
}

GridFunction potential_V(const GridDensity& p, const GridKernel& k) {
  require_same_size(p.size(), k.size());
  const Eigen::VectorXd v = k.matrix().transpose() * as_vec(p.values()) * p.cell_width();
  return {v.data(), v.data() + v.size()};
}

GridFunction potential_U(const GridDensity& q, const GridKernel& k) {
  require_same_size(q.size(), k.size());
  const Eigen::VectorXd u = k.matrix() * as_vec(q.values()) * q.cell_width();
  return {u.data(), u.data() + u.size()};
}

double bilinear_energy(const GridDensity& p, const GridDensity& q, const GridKernel& k) {
  require_same_size(p.size(), k.size());
  require_same_size(q.size(), k.size());
  const double dx = k.cell_width();
  return as_vec(p.values()).dot(k.matrix() * as_vec(q.values())) * dx * dx;
}

double entropy(const GridDensity& p) {
  double s = 0.0;
  for (double v : p.values())
    if (v > 0.0) s += v * std::log(v);
  return s * p.cell_width();
}

GridDensity gibbs_density(const GridFunction& potential, double beta, double sign) {
  require_beta(beta);
  if (potential.empty()) throw std::invalid_argument("empty potential");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : potential) top = std::max(top, sign * beta * v);
  std::vector<double> w(potential.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(sign * beta * potential[i] - top);
  return GridDensity::normalized(std::move(w));
}

GridDensity gibbs_response(const GridDensity& p, const GridKernel& k, double beta) {
  return gibbs_density(potential_V(p, k), beta, +1.0);
}

GridDensity boltzmann_density(const GridFunction& psi, double beta) { return gibbs_density(psi, beta, -1.0); }

double log_partition(const GridDensity& p, const GridKernel& k, double beta) {
  require_beta(beta);
  const GridFunction v = potential_V(p, k);
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, beta * x);
  double sum = 0.0;
  for (double x : v) sum += std::exp(beta * x - top);
  return (top + std::log(sum * k.cell_width())) / beta;
}

double free_energy(const GridDensity& p, const GridKernel& k, double beta) {
  return log_partition(p, k, beta) + entropy(p) / beta;
}

GridFunction first_variation(const GridDensity& p, const GridKernel& k, double beta) {
  return potential_U(gibbs_response(p, k, beta), k);
}

double total_variation(const GridDensity& a, const GridDensity& b) {
  require_same_size(a.size(), b.size());
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s * a.cell_width();
}

double sup_distance(const GridDensity& a, const GridDensity& b) {
  require_same_size(a.size(), b.size());
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

FixedPointResult fixed_point_solve(const GridKernel& k, double beta, const FixedPointOptions& options) {
  require_beta(beta);
  if (!(options.damping > 0.0 && options.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  if (!(options.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");

  GridDensity p = options.initial ? *options.initial : GridDensity::uniform(k.size());
  require_same_size(p.size(), k.size());
  double damping = options.damping;
  double previous = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();

  for (long it = 1; it <= options.max_iter; ++it) {
    const GridDensity target = boltzmann_density(first_variation(p, k, beta), beta);
    residual = sup_distance(target, p);
    if (residual < options.tol) return {p, gibbs_response(p, k, beta), it, residual, damping};
    if (options.adaptive) {
      if (residual > previous)
        damping = std::max(0.5 * damping, 1e-12);
      else
        damping = std::min(1.05 * damping, options.damping);
    }
    previous = residual;

    std::vector<double> next(p.values().size());
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = (1.0 - damping) * p.values()[i] + damping * target.values()[i];
    p = GridDensity::normalized(std::move(next));
  }
  throw NoConvergence(residual, options.max_iter);
}

double cfl_limit(int n, double beta, double max_slope) {
  require_beta(beta);
  const double dx = 1.0 / static_cast<double>(n);
  return 0.25 * dx * dx / (1.0 / beta + dx * max_slope);
}

PdeStepResult pde_step(const GridDensity& p, const GridKernel& k, double beta, std::optional<double> dt) {
  require_same_size(p.size(), k.size());
  const double dx = p.cell_width();
  const auto slopes = face_slopes(first_variation(p, k, beta), dx);
  const double step = resolve_dt(dt, cfl_limit(p.size(), beta, max_abs(slopes)));
  auto next = advance(p.values(), slopes, beta, step);
  return {GridDensity(std::move(next.values)), step, next.clipped};
}

CoupledStepResult coupled_pde_step(const GridDensity& p, const GridDensity& q, const GridKernel& k, double beta,
                                   std::optional<double> dt) {
  require_same_size(p.size(), k.size());
  require_same_size(q.size(), k.size());
  const double dx = p.cell_width();
  const auto p_slopes = face_slopes(potential_U(q, k), dx);
  GridFunction minus_v = potential_V(p, k);
  for (double& v : minus_v) v = -v;
  const auto q_slopes = face_slopes(minus_v, dx);
  const double limit = cfl_limit(p.size(), beta, std::max(max_abs(p_slopes), max_abs(q_slopes)));
  const double step = resolve_dt(dt, limit);
  auto np = advance(p.values(), p_slopes, beta, step);
  auto nq = advance(q.values(), q_slopes, beta, step);
  return {GridDensity(std::move(np.values)), GridDensity(std::move(nq.values)), step, np.clipped + nq.clipped};
}

void write_csv(std::ostream& out, const GridDensity& p) {
  out << "x,density\n";
  for (int i = 0; i < p.size(); ++i) out << format_double(p.center(i)) << ',' << format_double(p[i]) << '\n';
}

GridDensity read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "x,density") throw std::invalid_argument("expected header \"x,density\"");
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("malformed density row: " + line);
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  return GridDensity(std::move(values));
}

}  // namespace qslgd::grid
