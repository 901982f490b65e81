#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qslgd/rng.hpp"

namespace qslgd {

enum class ManifoldKind { kTorus, kSphere };

/// A strategy space: the flat torus (R/Z)^d or the unit sphere in R^d.
/// `dim` is always the number of stored coordinates, so sphere(3) is S^2.
struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::kTorus;
  int dim = 1;

  static ManifoldSpec torus(int d);
  static ManifoldSpec sphere(int d);
  /// Parses "torus:d" or "sphere:d".
  static ManifoldSpec parse(std::string_view text);

  std::string to_string() const;
  /// 1 for the unit torus, surface area for the sphere.
  double total_measure() const;

  bool operator==(const ManifoldSpec&) const = default;
};

struct Point {
  std::vector<double> coords;
  ManifoldSpec manifold;

  /// Torus coordinates in [0,1); sphere norm within `tol` of 1.
  bool valid(double tol = 1e-12) const;
};

/// Axis-aligned sub-box of the torus used for restricted initialization.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

bool satisfies_manifold(std::span<const double> coords, const ManifoldSpec& m, double tol = 1e-12);

/// Retraction onto the manifold: mod 1 on the torus, normalization on the
/// sphere. Throws DegenerateProjection for the zero vector on the sphere.
Point project(std::span<const double> raw, const ManifoldSpec& m);
void project_inplace(std::span<double> coords, const ManifoldSpec& m);

Point sample_uniform(const ManifoldSpec& m, NoiseStream& rng);
void sample_uniform_into(std::span<double> out, const ManifoldSpec& m, NoiseStream& rng);

/// Uniform draw from a sub-box of the torus.
Point sample_box(const ManifoldSpec& m, const Box& box, NoiseStream& rng);
void sample_box_into(std::span<double> out, const ManifoldSpec& m, const Box& box, NoiseStream& rng);

/// One Euler-Maruyama update followed by retraction:
///   project(p + step * drift + sqrt(2 step) * noise_coeff * xi).
/// No random numbers are consumed when noise_coeff is zero.
Point langevin_step(const Point& p, std::span<const double> drift, double step, double noise_coeff,
                    NoiseStream& rng);
void langevin_step_inplace(std::span<double> coords, const ManifoldSpec& m, std::span<const double> drift,
                           double step, double noise_coeff, NoiseStream& rng);

/// Measure of a geodesic ball of radius delta, normalized by the total measure.
double ball_volume_fraction(const ManifoldSpec& m, double delta);

/// Euclidean norm of the coordinatewise wrapped differences min(|a-b|, 1-|a-b|).
double torus_distance(std::span<const double> a, std::span<const double> b);
/// Great-circle distance between unit vectors.
double sphere_distance(std::span<const double> a, std::span<const double> b);
double distance(const Point& a, const Point& b);

}  // namespace qslgd
