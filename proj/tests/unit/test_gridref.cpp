#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "qslgd/errors.hpp"
#include "qslgd/gridref.hpp"

using namespace qslgd;
using namespace qslgd::grid;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

GridKernel sine(int n) { return GridKernel::from_kernel(Kernel::sine_torus(), n); }

// Smooth positive density: exp of a random trigonometric polynomial.
GridDensity smooth_density(int n, NoiseStream& rng, double amplitude = 0.7) {
  double a[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    a[k] = amplitude * rng.gaussian();
    phase[k] = kTwoPi * rng.uniform();
  }
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += a[k] * std::cos(kTwoPi * (k + 1) * x + phase[k]);
    v[static_cast<std::size_t>(i)] = std::exp(s);
  }
  return GridDensity::normalized(std::move(v));
}

// Rough positive density: independent cell values.
GridDensity rough_density(int n, NoiseStream& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform() + 1e-3;
  return GridDensity::normalized(std::move(v));
}

GridDensity point_mass(int n, int cell) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  v[static_cast<std::size_t>(cell)] = n;
  return GridDensity(std::move(v));
}

GridDensity mix(const GridDensity& a, const GridDensity& b, double lambda) {
  std::vector<double> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = lambda * a.values()[i] + (1 - lambda) * b.values()[i];
  return GridDensity::normalized(std::move(v));
}

double sup_abs(const GridFunction& f) {
  double m = 0.0;
  for (double x : f) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_SUITE("gridref") {
  TEST_CASE("density validation") {
    CHECK_THROWS_AS(GridDensity({1.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(GridDensity({2.5, -0.5}), std::invalid_argument);
    CHECK(GridDensity::uniform(8).mass() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(GridDensity::normalized({1.0, 3.0}).values() == std::vector<double>{0.5, 1.5});
  }

  TEST_CASE("potentials") {
    const int n = 256;
    const GridKernel k = sine(n);
    CHECK(sup_abs(potential_V(GridDensity::uniform(n), k)) < 1e-12);
    CHECK(sup_abs(potential_U(GridDensity::uniform(n), k)) < 1e-12);

    NoiseStream rng(1, StreamRole::kAux, 0);
    const GridDensity p = rough_density(n, rng);
    for (double v : potential_V(p, GridKernel::constant(n, 1.0))) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
    for (double u : potential_U(p, GridKernel::constant(n, 1.0))) CHECK(u == doctest::Approx(1.0).epsilon(1e-13));

    // Point mass in the cell containing 0.25; its center is 0.25 + dx/2.
    const GridDensity delta = point_mass(n, 64);
    const auto v = potential_V(delta, k);
    const auto u = potential_U(delta, k);
    for (int j = 0; j < n; ++j) {
      const double expected = std::sin(kTwoPi * (j + 0.5) / n);
      CHECK(std::abs(v[j] - expected) < 1e-4);
      CHECK(std::abs(u[j] - expected) < 1e-4);
    }
  }

  TEST_CASE("gibbs response") {
    const int n = 256;
    const GridKernel k = sine(n);
    const GridDensity q = gibbs_response(GridDensity::uniform(n), k, 10.0);
    for (double v : q.values()) CHECK(std::abs(v - 1.0) < 1e-12);

    NoiseStream rng(2, StreamRole::kAux, 0);
    for (double beta : {0.1, 3.0, 1e4}) {
      const GridDensity c = gibbs_response(rough_density(n, rng), GridKernel::constant(n, 2.5), beta);
      for (double v : c.values()) CHECK(std::abs(v - 1.0) < 1e-12);
    }

    // 254 cells put centers exactly at 1/4 (cell 63) and 3/4 (cell 190).
    const int m = 254;
    const GridDensity g = gibbs_response(point_mass(m, 63), sine(m), 2.0);
    CHECK(g[63] / g[190] == doctest::Approx(std::exp(4.0)).epsilon(1e-10));

    // Stabilized: no overflow at huge beta.
    const GridDensity sharp = gibbs_response(rough_density(n, rng), k, 1e6);
    CHECK(sharp.mass() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("log partition, free energy, first variation: closed forms") {
    const int n = 256;
    const GridKernel k = sine(n);
    const GridDensity u = GridDensity::uniform(n);
    CHECK(std::abs(log_partition(u, k, 5.0)) < 1e-14);
    CHECK(std::abs(entropy(u)) < 1e-14);
    for (double beta : {0.5, 10.0, 1000.0}) CHECK(std::abs(free_energy(u, k, beta)) < 1e-12);
    CHECK(sup_abs(first_variation(u, k, 10.0)) < 1e-12);

    NoiseStream rng(3, StreamRole::kAux, 0);
    const GridDensity p = rough_density(n, rng);
    CHECK(log_partition(p, GridKernel::constant(n, 0.7), 4.0) == doctest::Approx(0.7).epsilon(1e-12));
    for (double v : first_variation(p, GridKernel::constant(n, 0.7), 4.0)) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    // Entropy of a two-level density: half the cells at 1.5, half at 0.5.
    std::vector<double> two(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) two[static_cast<std::size_t>(i)] = i < n / 2 ? 1.5 : 0.5;
    CHECK(entropy(GridDensity(two)) == doctest::Approx(0.5 * (1.5 * std::log(1.5) + 0.5 * std::log(0.5))).epsilon(1e-13));
    // 0 log 0 = 0.
    CHECK(entropy(point_mass(4, 1)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }

  TEST_CASE("convexity along mixtures") {
    const int n = 256;
    const GridKernel k = sine(n);
    NoiseStream rng(4, StreamRole::kAux, 0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const GridDensity a = trial % 2 ? smooth_density(n, rng, 2.0) : rough_density(n, rng);
      const GridDensity b = smooth_density(n, rng, 2.0);
      const double fa = free_energy(a, k, 10.0), fb = free_energy(b, k, 10.0);
      const double la = log_partition(a, k, 10.0), lb = log_partition(b, k, 10.0);
      for (double lambda : {0.25, 0.5, 0.75}) {
        const GridDensity m = mix(a, b, lambda);
        if (free_energy(m, k, 10.0) > lambda * fa + (1 - lambda) * fb + 1e-12) ++violations;
        if (log_partition(m, k, 10.0) > lambda * la + (1 - lambda) * lb + 1e-12) ++violations;
      }
    }
    CHECK(violations == 0);
  }

  TEST_CASE("variational identity") {
    const int n = 256;
    const GridKernel k = sine(n);
    NoiseStream rng(5, StreamRole::kAux, 0);
    const double beta = 10.0, eps = 1e-5;
    const GridDensity p = smooth_density(n, rng, 1.0);
    const GridFunction psi = first_variation(p, k, beta);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> eta(static_cast<std::size_t>(n));
      double mean = 0.0;
      for (double& e : eta) mean += (e = rng.gaussian());
      mean /= n;
      for (double& e : eta) e -= mean;
      std::vector<double> up(eta.size()), down(eta.size());
      for (std::size_t i = 0; i < eta.size(); ++i) {
        up[i] = p.values()[i] + eps * eta[i];
        down[i] = p.values()[i] - eps * eta[i];
      }
      const double fd = (log_partition(GridDensity(up), k, beta) - log_partition(GridDensity(down), k, beta)) / (2 * eps);
      double exact = 0.0;
      for (std::size_t i = 0; i < eta.size(); ++i) exact += psi[i] * eta[i] / n;
      worst = std::max(worst, std::abs(fd - exact) / std::abs(exact));
    }
    MESSAGE("worst relative error " << worst);
    CHECK(worst < 1e-4);
  }

  TEST_CASE("free energy identity") {
    const int n = 256;
    const GridKernel k = sine(n);
    NoiseStream rng(6, StreamRole::kAux, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const double beta = trial % 3 == 0 ? 1.0 : (trial % 3 == 1 ? 10.0 : 100.0);
      const GridDensity p = trial % 2 ? smooth_density(n, rng, 1.5) : rough_density(n, rng);
      const GridDensity q = gibbs_response(p, k, beta);
      const double lhs = bilinear_energy(p, q, k) + entropy(p) / beta - entropy(q) / beta;
      CHECK(std::abs(lhs - free_energy(p, k, beta)) < 1e-10);
    }
  }

  TEST_CASE("fixed point: sine torus gives the uniform pair") {
    const int n = 256;
    const GridKernel k = sine(n);
    NoiseStream rng(7, StreamRole::kAux, 0);
    for (double beta : {1.0, 10.0, 100.0}) {
      FixedPointOptions opt;
      opt.initial = smooth_density(n, rng, 1.0);
      // The sin-mode gain of the undamped map is -beta^2/4, so at beta=100 the
      // damping must stay below ~1e-3 and a generic start converges slowly.
      if (beta >= 100.0) opt.tol = 1e-8;
      const FixedPointResult r = fixed_point_solve(k, beta, opt);
      for (int i = 0; i < n; ++i) {
        CHECK(std::abs(r.p[i] - 1.0) < 1e-6);
        CHECK(std::abs(r.q[i] - 1.0) < 1e-6);
      }
      // Both equilibrium equations hold within tol.
      const GridDensity p_check = boltzmann_density(potential_U(r.q, k), beta);
      const GridDensity q_check = gibbs_response(r.p, k, beta);
      CHECK(sup_distance(p_check, r.p) < opt.tol);
      CHECK(sup_distance(q_check, r.q) < opt.tol);
    }
  }

  TEST_CASE("fixed point: non-trivial game satisfies both equations") {
    const int n = 128;
    const GridKernel k = GridKernel::from_function(n, [](double x, double y) {
      return std::sin(kTwoPi * x) * std::sin(kTwoPi * y) + 0.8 * std::cos(kTwoPi * (x - 0.3)) + 0.5 * std::cos(kTwoPi * y);
    });
    for (double beta : {1.0, 5.0, 30.0}) {
      const FixedPointResult r = fixed_point_solve(k, beta);
      CHECK(sup_distance(boltzmann_density(potential_U(r.q, k), beta), r.p) < 1e-10);
      CHECK(sup_distance(gibbs_response(r.p, k, beta), r.q) < 1e-10);
    }
  }

  TEST_CASE("fixed point: zero kernel converges immediately; failures are reported") {
    const FixedPointResult r = fixed_point_solve(GridKernel::constant(64, 0.0), 3.0);
    CHECK(r.iterations == 1);
    for (double v : r.p.values()) CHECK(v == 1.0);

    FixedPointOptions opt;
    opt.max_iter = 2;
    opt.tol = 1e-300;
    NoiseStream rng(8, StreamRole::kAux, 0);
    opt.initial = smooth_density(256, rng);
    try {
      fixed_point_solve(sine(256), 50.0, opt);
      FAIL("expected no convergence");
    } catch (const NoConvergence& e) {
      CHECK(e.iterations() == 2);
      CHECK(e.residual() > 0.0);
    }
    FixedPointOptions bad;
    bad.damping = 0.0;
    CHECK_THROWS_AS(fixed_point_solve(sine(16), 1.0, bad), std::invalid_argument);
  }

  TEST_CASE("fixed point minimizes the free energy") {
    const int n = 256;
    const GridKernel k = sine(n);
    const double beta = 10.0;
    const FixedPointResult star = fixed_point_solve(k, beta);
    const double f_star = free_energy(star.p, k, beta);
    NoiseStream rng(9, StreamRole::kAux, 0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const GridDensity p = trial % 2 ? smooth_density(n, rng, 0.3) : rough_density(n, rng);
      const double gap = free_energy(p, k, beta) - f_star;
      if (gap < 0.0) ++violations;
      if (total_variation(p, star.p) > 1e-3 && !(gap > 0.0)) ++violations;
    }
    CHECK(violations == 0);
  }

  TEST_CASE("pde step: stationary uniform, mass conservation, CFL") {
    const int n = 256;
    const GridKernel k = sine(n);
    const auto r = pde_step(GridDensity::uniform(n), k, 10.0);
    for (double v : r.density.values()) CHECK(std::abs(v - 1.0) < 1e-14);
    CHECK(r.dt == doctest::Approx(0.9 * cfl_limit(n, 10.0, 0.0)).epsilon(1e-14));

    NoiseStream rng(10, StreamRole::kAux, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const GridDensity p = trial % 2 ? smooth_density(n, rng, 1.5) : rough_density(n, rng);
      double before = 0.0;
      for (double v : p.values()) before += v;
      const auto s = pde_step(p, k, 10.0);
      double after = 0.0;
      for (double v : s.density.values()) after += v;
      CHECK(std::abs(after - before) / n < 1e-14);
      CHECK(s.clipped < 1e-12);
    }
    CHECK_THROWS_AS(pde_step(GridDensity::uniform(n), k, 10.0, 1.0), CflViolation);
    CHECK(cfl_limit(100, 4.0, 3.0) == doctest::Approx(0.25 * 1e-4 / (0.25 + 0.03)).epsilon(1e-15));
  }

  TEST_CASE("pde step: free energy is a Lyapunov function") {
    const int n = 256;
    const GridKernel k = sine(n);
    const double beta = 10.0;
    NoiseStream rng(11, StreamRole::kAux, 0);
    double worst_increase = -1.0;
    double worst_clip = 0.0;
    for (int init = 0; init < 10; ++init) {
      GridDensity p = smooth_density(n, rng, 1.5);
      double f = free_energy(p, k, beta);
      for (int step = 0; step < 10000; ++step) {
        const auto s = pde_step(p, k, beta);
        const double next = free_energy(s.density, k, beta);
        worst_increase = std::max(worst_increase, next - f);
        worst_clip = std::max(worst_clip, s.clipped);
        f = next;
        p = s.density;
      }
    }
    MESSAGE("largest per-step increase " << worst_increase);
    CHECK(worst_increase < 1e-12);
    CHECK(worst_clip < 1e-12);
  }

  TEST_CASE("coupled pde step") {
    const int n = 128;
    const GridKernel k = sine(n);
    const GridDensity u = GridDensity::uniform(n);
    const auto s = coupled_pde_step(u, u, k, 1.0);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(s.p[i] - 1.0) < 1e-14);
      CHECK(std::abs(s.q[i] - 1.0) < 1e-14);
    }

    NoiseStream rng(12, StreamRole::kAux, 0);
    GridDensity p = smooth_density(n, rng, 1.0), q = smooth_density(n, rng, 1.0);
    const double mp = p.mass(), mq = q.mass();
    double t = 0.0;
    while (t < 3.0) {
      const auto r = coupled_pde_step(p, q, k, 1.0);
      CHECK(std::abs(r.p.mass() - mp) < 1e-13);
      CHECK(std::abs(r.q.mass() - mq) < 1e-13);
      p = r.p;
      q = r.q;
      t += r.dt;
    }
    const FixedPointResult star = fixed_point_solve(k, 1.0);
    CHECK(total_variation(p, star.p) < 1e-2);
    CHECK(total_variation(q, star.q) < 1e-2);
  }

  TEST_CASE("csv round trip is exact") {
    NoiseStream rng(13, StreamRole::kAux, 0);
    const GridDensity p = rough_density(64, rng);
    std::stringstream ss;
    write_csv(ss, p);
    CHECK(ss.str().rfind("x,density\n", 0) == 0);
    const GridDensity back = read_csv(ss);
    CHECK(back.values() == p.values());
    std::stringstream bad("x,density\n0.5,abc\n");
    CHECK_THROWS(read_csv(bad));
  }
}
