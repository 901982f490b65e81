#include "qslgd/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qslgd/rng.hpp"

namespace qslgd {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

ConstVec as_vec(std::span<const double> s) { return ConstVec(s.data(), static_cast<Eigen::Index>(s.size())); }
MutVec as_vec(std::span<double> s) { return MutVec(s.data(), static_cast<Eigen::Index>(s.size())); }

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

Kernel Kernel::sine_torus(double scale) {
  if (!std::isfinite(scale)) throw std::invalid_argument("kernel scale must be finite");
  Kernel k;
  k.kind_ = KernelKind::kSineTorus;
  k.manifold_ = ManifoldSpec::torus(1);
  k.scale_ = scale;
  return k;
}

Kernel Kernel::polynomial_sphere(Matrices a) {
  const Eigen::Index d = a[0].rows();
  for (const auto& m : a) {
    if (m.rows() != d || m.cols() != d) throw std::invalid_argument("polynomial kernel matrices must all be d x d");
    if (!m.allFinite()) throw std::invalid_argument("polynomial kernel matrices must be finite");
  }
  Kernel k;
  k.kind_ = KernelKind::kPolynomialSphere;
  k.manifold_ = ManifoldSpec::sphere(static_cast<int>(d));
  k.a_ = std::move(a);
  k.a0_sym_ = k.a_[0] + k.a_[0].transpose();
  k.a2_sym_ = k.a_[2] + k.a_[2].transpose();
  return k;
}

Kernel Kernel::polynomial_sphere_gaussian(int d, std::uint64_t matrix_seed) {
  if (d < 2) throw std::invalid_argument("polynomial sphere kernel needs d >= 2");
  NoiseStream rng(matrix_seed, StreamRole::kAux, 0);
  Matrices a;
  for (auto& m : a) {
    m.resize(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = rng.gaussian() / d;
  }
  return polynomial_sphere(std::move(a));
}

Kernel Kernel::scaled(double factor) const {
  if (kind_ == KernelKind::kSineTorus) return sine_torus(scale_ * factor);
  Matrices a = a_;
  for (auto& m : a) m *= factor;
  return polynomial_sphere(std::move(a));
}

void Kernel::check(const Point& x, const Point& y) const {
  if (!(x.manifold == manifold_) || !(y.manifold == manifold_))
    throw std::invalid_argument("point manifold does not match kernel manifold " + manifold_.to_string());
}

double Kernel::eval(const Point& x, const Point& y) const {
  check(x, y);
  return eval(std::span<const double>(x.coords), std::span<const double>(y.coords));
}

std::vector<double> Kernel::grad_x(const Point& x, const Point& y) const {
  check(x, y);
  std::vector<double> out(dim());
  grad_x(std::span<const double>(x.coords), std::span<const double>(y.coords), out);
  return out;
}

std::vector<double> Kernel::grad_y(const Point& x, const Point& y) const {
  check(x, y);
  std::vector<double> out(dim());
  grad_y(std::span<const double>(x.coords), std::span<const double>(y.coords), out);
  return out;
}

double Kernel::eval(std::span<const double> x, std::span<const double> y) const {
  if (kind_ == KernelKind::kSineTorus) return scale_ * std::sin(kTwoPi * x[0]) * std::sin(kTwoPi * y[0]);
  const auto xv = as_vec(x);
  const auto yv = as_vec(y);
  return xv.dot(a_[0] * xv) + xv.dot(a_[1] * yv) + yv.dot(a_[2] * yv) +
         yv.dot(a_[3] * xv.cwiseProduct(xv));
}

void Kernel::grad_x(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (kind_ == KernelKind::kSineTorus) {
    out[0] = scale_ * kTwoPi * std::cos(kTwoPi * x[0]) * std::sin(kTwoPi * y[0]);
    return;
  }
  const auto xv = as_vec(x);
  const auto yv = as_vec(y);
  as_vec(out) = a0_sym_ * xv + a_[1] * yv + 2.0 * xv.cwiseProduct(a_[3].transpose() * yv);
}

void Kernel::grad_y(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (kind_ == KernelKind::kSineTorus) {
    out[0] = scale_ * kTwoPi * std::sin(kTwoPi * x[0]) * std::cos(kTwoPi * y[0]);
    return;
  }
  const auto xv = as_vec(x);
  const auto yv = as_vec(y);
  as_vec(out) = a_[1].transpose() * xv + a2_sym_ * yv + a_[3] * xv.cwiseProduct(xv);
}

KernelConstants Kernel::constants() const {
  if (kind_ == KernelKind::kSineTorus) {
    const double s = std::abs(scale_);
    return {s, s * kTwoPi * std::numbers::sqrt2};
  }
  // On the unit sphere |x∘x| <= 1, so every term is bounded by an operator norm.
  const double n0 = spectral_norm(a_[0]);
  const double n1 = spectral_norm(a_[1]);
  const double n2 = spectral_norm(a_[2]);
  const double n3 = spectral_norm(a_[3]);
  const double gx = spectral_norm(a0_sym_) + n1 + 2.0 * n3;
  const double gy = n1 + spectral_norm(a2_sym_) + n3;
  return {n0 + n1 + n2 + n3, std::hypot(gx, gy)};
}

MeanFeatures Kernel::x_features(std::span<const double> flat) const {
  const std::size_t d = static_cast<std::size_t>(dim());
  const std::size_t n = flat.size() / d;
  if (n == 0 || n * d != flat.size()) throw std::invalid_argument("ensemble coordinates are not a multiple of d");
  MeanFeatures f;
  if (kind_ == KernelKind::kSineTorus) {
    double s = 0.0;
    for (double x : flat) s += std::sin(kTwoPi * x);
    f.first = {s / static_cast<double>(n)};
    return f;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd mean_sq = Eigen::VectorXd::Zero(d);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = as_vec(flat.subspan(i * d, d));
    mean += x;
    mean_sq += x.cwiseProduct(x);
    quad += x.dot(a_[0] * x);
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean *= inv;
  mean_sq *= inv;
  f.first.assign(mean.data(), mean.data() + d);
  f.second.assign(mean_sq.data(), mean_sq.data() + d);
  f.quadratic = quad * inv;
  return f;
}

MeanFeatures Kernel::y_features(std::span<const double> flat) const {
  const std::size_t d = static_cast<std::size_t>(dim());
  const std::size_t n = flat.size() / d;
  if (n == 0 || n * d != flat.size()) throw std::invalid_argument("ensemble coordinates are not a multiple of d");
  MeanFeatures f;
  if (kind_ == KernelKind::kSineTorus) {
    double s = 0.0;
    for (double y : flat) s += std::sin(kTwoPi * y);
    f.first = {s / static_cast<double>(n)};
    return f;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = as_vec(flat.subspan(i * d, d));
    mean += y;
    quad += y.dot(a_[2] * y);
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean *= inv;
  f.first.assign(mean.data(), mean.data() + d);
  f.quadratic = quad * inv;
  return f;
}

void Kernel::mean_grad_x(std::span<const double> x, const MeanFeatures& ys, std::span<double> out) const {
  if (kind_ == KernelKind::kSineTorus) {
    out[0] = scale_ * kTwoPi * std::cos(kTwoPi * x[0]) * ys.first[0];
    return;
  }
  const auto xv = as_vec(x);
  const auto ybar = as_vec(std::span<const double>(ys.first));
  as_vec(out) = a0_sym_ * xv + a_[1] * ybar + 2.0 * xv.cwiseProduct(a_[3].transpose() * ybar);
}

void Kernel::mean_grad_y(std::span<const double> y, const MeanFeatures& xs, std::span<double> out) const {
  if (kind_ == KernelKind::kSineTorus) {
    out[0] = scale_ * kTwoPi * xs.first[0] * std::cos(kTwoPi * y[0]);
    return;
  }
  const auto yv = as_vec(y);
  const auto xbar = as_vec(std::span<const double>(xs.first));
  const auto xsq = as_vec(std::span<const double>(xs.second));
  as_vec(out) = a_[1].transpose() * xbar + a2_sym_ * yv + a_[3] * xsq;
}

double Kernel::mean_over_y(std::span<const double> x, const MeanFeatures& ys) const {
  if (kind_ == KernelKind::kSineTorus) return scale_ * std::sin(kTwoPi * x[0]) * ys.first[0];
  const auto xv = as_vec(x);
  const auto ybar = as_vec(std::span<const double>(ys.first));
  return xv.dot(a_[0] * xv) + xv.dot(a_[1] * ybar) + ys.quadratic + ybar.dot(a_[3] * xv.cwiseProduct(xv));
}

double Kernel::mean_over_x(std::span<const double> y, const MeanFeatures& xs) const {
  if (kind_ == KernelKind::kSineTorus) return scale_ * xs.first[0] * std::sin(kTwoPi * y[0]);
  const auto yv = as_vec(y);
  const auto xbar = as_vec(std::span<const double>(xs.first));
  const auto xsq = as_vec(std::span<const double>(xs.second));
  return xs.quadratic + xbar.dot(a_[1] * yv) + yv.dot(a_[2] * yv) + yv.dot(a_[3] * xsq);
}

}  // namespace qslgd
