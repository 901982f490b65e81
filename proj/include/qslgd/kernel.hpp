#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qslgd/manifold.hpp"

namespace qslgd {

enum class KernelKind {
  kSineTorus,         // K(x,y) = s sin(2 pi x) sin(2 pi y) on the circle
  kPolynomialSphere,  // K(x,y) = x'A0x + x'A1y + y'A2y + y'A3(x∘x) on S^{d-1}
};

struct KernelConstants {
  double bound;      // C_K >= sup |K|
  double lipschitz;  // joint Lipschitz constant of K on Omega x Omega
};

/// Ensemble averages of the features the payoff is linear in. Both kernel
/// families are linear in a fixed feature map of the opposing point, so the
/// mean payoff and mean gradient against an ensemble depend only on these.
struct MeanFeatures {
  std::vector<double> first;   // sine: {E sin 2 pi z}; sphere: E z
  std::vector<double> second;  // sphere, x side only: E z∘z
  double quadratic = 0.0;      // sphere: E x'A0x (x side) or E y'A2y (y side)
};

/// Payoff K(x,y), minimized over x and maximized over y. Immutable.
class Kernel {
 public:
  using Matrices = std::array<Eigen::MatrixXd, 4>;

  static Kernel sine_torus(double scale = 1.0);
  static Kernel polynomial_sphere(Matrices a);
  /// A0..A3 with i.i.d. N(0,1)/d entries drawn from an auxiliary stream.
  static Kernel polynomial_sphere_gaussian(int d, std::uint64_t matrix_seed);

  KernelKind kind() const noexcept { return kind_; }
  const ManifoldSpec& manifold() const noexcept { return manifold_; }
  int dim() const noexcept { return manifold_.dim; }
  double scale() const noexcept { return scale_; }
  const Matrices& matrices() const noexcept { return a_; }

  /// Copy with the payoff multiplied by `factor`.
  Kernel scaled(double factor) const;

  // Checked point API: throws std::invalid_argument on manifold mismatch.
  double eval(const Point& x, const Point& y) const;
  std::vector<double> grad_x(const Point& x, const Point& y) const;
  std::vector<double> grad_y(const Point& x, const Point& y) const;

  // Unchecked coordinate API used by the particle loops.
  double eval(std::span<const double> x, std::span<const double> y) const;
  void grad_x(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void grad_y(std::span<const double> x, std::span<const double> y, std::span<double> out) const;

  KernelConstants constants() const;

  /// Features of an X-ensemble (flat, row-major coordinates) for V and grad_y.
  MeanFeatures x_features(std::span<const double> flat) const;
  /// Features of a Y-ensemble for U and grad_x.
  MeanFeatures y_features(std::span<const double> flat) const;

  /// (1/n) sum_j grad_x K(x, y_j)
  void mean_grad_x(std::span<const double> x, const MeanFeatures& ys, std::span<double> out) const;
  /// (1/n) sum_j grad_y K(x_j, y)
  void mean_grad_y(std::span<const double> y, const MeanFeatures& xs, std::span<double> out) const;
  /// U(x, q) = (1/n) sum_j K(x, y_j)
  double mean_over_y(std::span<const double> x, const MeanFeatures& ys) const;
  /// V(y, p) = (1/n) sum_j K(x_j, y)
  double mean_over_x(std::span<const double> y, const MeanFeatures& xs) const;

 private:
  Kernel() = default;
  void check(const Point& x, const Point& y) const;

  KernelKind kind_ = KernelKind::kSineTorus;
  ManifoldSpec manifold_{};
  double scale_ = 1.0;
  Matrices a_{};
  // Cached A0 + A0', A2 + A2'.
  Eigen::MatrixXd a0_sym_;
  Eigen::MatrixXd a2_sym_;
};

}  // namespace qslgd
