#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qslgd/kernel.hpp"

// Grid oracle for games on the circle R/Z: densities are piecewise constant
// on N uniform cells and every integral is a midpoint sum.
namespace qslgd::grid {

/// Values on the N cell centers x_i = (i + 1/2)/N.
using GridFunction = std::vector<double>;

class GridDensity {
 public:
  /// Throws std::invalid_argument unless the values are nonnegative and
  /// sum(values) / N == 1 within 1e-12.
  explicit GridDensity(std::vector<double> values);

  static GridDensity uniform(int n);
  /// Rescales nonnegative values to unit mass.
  static GridDensity normalized(std::vector<double> values);

  int size() const noexcept { return static_cast<int>(values_.size()); }
  double cell_width() const noexcept { return 1.0 / static_cast<double>(values_.size()); }
  double center(int i) const noexcept { return (i + 0.5) * cell_width(); }
  double mass() const;

  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<double> values_;
};

/// K(x_i, y_j) on cell centers.
class GridKernel {
 public:
  explicit GridKernel(Eigen::MatrixXd matrix);

  /// Requires a kernel on torus:1.
  static GridKernel from_kernel(const Kernel& k, int n);
  static GridKernel from_function(int n, const std::function<double(double, double)>& k);
  static GridKernel constant(int n, double c);

  int size() const noexcept { return static_cast<int>(matrix_.rows()); }
  double cell_width() const noexcept { return 1.0 / static_cast<double>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }

 private:
  Eigen::MatrixXd matrix_;
};

/// V(y_j, p) = sum_i K_ij p_i dx
GridFunction potential_V(const GridDensity& p, const GridKernel& k);
/// U(x_i, q) = sum_j K_ij q_j dx
GridFunction potential_U(const GridDensity& q, const GridKernel& k);

/// E(p, q) = sum_ij p_i K_ij q_j dx^2
double bilinear_energy(const GridDensity& p, const GridDensity& q, const GridKernel& k);
/// S(p) = sum_i p_i log p_i dx with 0 log 0 = 0.
double entropy(const GridDensity& p);

/// Normalized exp(sign * beta * potential), evaluated with the maximum exponent
/// subtracted first.
GridDensity gibbs_density(const GridFunction& potential, double beta, double sign);

/// Best response q[p] proportional to exp(beta V(., p)).
GridDensity gibbs_response(const GridDensity& p, const GridKernel& k, double beta);
/// Boltzmann density proportional to exp(-beta psi).
GridDensity boltzmann_density(const GridFunction& psi, double beta);

/// beta^-1 log( sum_j exp(beta V_j) dx ).
double log_partition(const GridDensity& p, const GridKernel& k, double beta);
/// log_partition(p) + beta^-1 S(p); the reduced free energy minimized by p.
double free_energy(const GridDensity& p, const GridKernel& k, double beta);
/// Psi(., p) = U(., q[p]), the first variation of log_partition.
GridFunction first_variation(const GridDensity& p, const GridKernel& k, double beta);

double total_variation(const GridDensity& a, const GridDensity& b);
double sup_distance(const GridDensity& a, const GridDensity& b);

struct FixedPointOptions {
  double damping = 0.5;
  double tol = 1e-10;
  long max_iter = 100000;
  /// Halve the damping whenever the residual grows between iterations and
  /// let it recover by 5% per improving iteration, never above `damping`.
  bool adaptive = true;
  std::optional<GridDensity> initial;  // uniform when absent
};

struct FixedPointResult {
  GridDensity p;
  GridDensity q;
  long iterations = 0;
  double residual = 0.0;  // sup |p - boltzmann(first_variation(p))|
  double final_damping = 0.0;
};

/// Damped iteration p <- (1-a) p + a boltzmann(Psi(., p)). Stops once the
/// undamped update moves p by less than tol in sup norm, so both lines of the
/// equilibrium system hold within tol. Throws NoConvergence on max_iter.
FixedPointResult fixed_point_solve(const GridKernel& k, double beta, const FixedPointOptions& options = {});

/// Largest stable explicit step for advection speed `max_slope`:
///   0.25 dx^2 / (beta^-1 + dx * max_slope)
double cfl_limit(int n, double beta, double max_slope);

struct PdeStepResult {
  GridDensity density;
  double dt = 0.0;
  double clipped = 0.0;  // total negative mass removed before renormalizing
};

/// One explicit finite-volume step of
///   d_t p = d_x( p d_x Psi(., p) + beta^-1 d_x p )
/// with periodic faces, centered face gradients and arithmetic-mean face
/// densities. `dt` absent selects 0.9 of the CFL limit. Throws CflViolation
/// when dt exceeds the limit.
PdeStepResult pde_step(const GridDensity& p, const GridKernel& k, double beta, std::optional<double> dt = {});

struct CoupledStepResult {
  GridDensity p;
  GridDensity q;
  double dt = 0.0;
  double clipped = 0.0;
};

/// Simultaneous step of the descent-ascent pair: p moves in U(., q), q in -V(., p).
CoupledStepResult coupled_pde_step(const GridDensity& p, const GridDensity& q, const GridKernel& k, double beta,
                                   std::optional<double> dt = {});

/// CSV with header "x,density".
void write_csv(std::ostream& out, const GridDensity& p);
GridDensity read_csv(std::istream& in);

}  // namespace qslgd::grid
