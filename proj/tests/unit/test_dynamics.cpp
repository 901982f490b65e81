#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qslgd/dynamics.hpp"
#include "qslgd/errors.hpp"
#include "qslgd/gridref.hpp"
#include "qslgd/metrics.hpp"

using namespace qslgd;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
const ManifoldSpec kCircle = ManifoldSpec::torus(1);

Ensemble circle(std::vector<double> xs) { return Ensemble(kCircle, std::move(xs)); }

Ensemble uniform_circle(std::size_t n, std::uint64_t seed) {
  ParticleStreams s(seed, StreamRole::kAux, n);
  return initialize(kCircle, InitSpec::uniform(), n, s);
}

double wrap(double x) { return x - std::floor(x); }

RunConfig small_config() {
  RunConfig c;
  c.n_x = 40;
  c.n_y = 30;
  c.k0 = 3;
  c.k1 = 2;
  c.k2 = 2;
  c.T = 5;
  c.beta = 50.0;
  return c;
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("ensemble validation") {
    CHECK_THROWS_AS(Ensemble(kCircle, {}), std::invalid_argument);
    CHECK_THROWS_AS(Ensemble(kCircle, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(Ensemble(ManifoldSpec::sphere(2), {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(Ensemble(ManifoldSpec::sphere(2), {1.0, 0.0, 0.0}), std::invalid_argument);
    const Ensemble e(ManifoldSpec::sphere(2), {1.0, 0.0, 0.0, 1.0});
    CHECK(e.size() == 2);
    CHECK(e.at(1).coords == std::vector<double>{0.0, 1.0});
  }

  TEST_CASE("lgda: zero kernel without noise is a fixed point") {
    const Kernel zero = Kernel::sine_torus(0.0);
    const Ensemble x = uniform_circle(20, 1), y = uniform_circle(20, 2);
    ParticleStreams xs(0, StreamRole::kX, 20), ys(0, StreamRole::kY, 20);
    auto [nx, ny] = lgda_step(x, y, zero, 0.01, kInf, xs, ys);
    CHECK(nx == x);
    CHECK(ny == y);
    auto [ax, ay] = lgda_step_alternating(x, y, zero, 0.01, kInf, xs, ys);
    CHECK(ax == x);
    CHECK(ay == y);
    CHECK(xs[0].blocks_consumed() == 0);
  }

  TEST_CASE("lgda: both particles at 1/2 stay put") {
    ParticleStreams xs(0, StreamRole::kX, 1), ys(0, StreamRole::kY, 1);
    auto [nx, ny] = lgda_step(circle({0.5}), circle({0.5}), Kernel::sine_torus(), 0.01, kInf, xs, ys);
    CHECK(nx.coords()[0] == 0.5);
    CHECK(ny.coords()[0] == 0.5);
  }

  TEST_CASE("lgda: one step equals the hand-rolled update") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = circle({0.1, 0.7}), y = circle({0.3, 0.95});
    const double h = 0.01, beta = 7.0;
    ParticleStreams xs(5, StreamRole::kX, 2), ys(5, StreamRole::kY, 2);
    auto [nx, ny] = lgda_step(x, y, k, h, beta, xs, ys);

    const double sigma = std::sqrt(2.0 * h / beta);
    for (std::size_t i = 0; i < 2; ++i) {
      NoiseStream nxi(5, StreamRole::kX, i), nyi(5, StreamRole::kY, i);
      double dx = 0.0, dy = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        dx += kTwoPi * std::cos(kTwoPi * x.coords()[i]) * std::sin(kTwoPi * y.coords()[j]) / 2.0;
        dy += kTwoPi * std::sin(kTwoPi * x.coords()[j]) * std::cos(kTwoPi * y.coords()[i]) / 2.0;
      }
      const double ex = wrap(x.coords()[i] - h * dx + sigma * nxi.gaussian());
      const double ey = wrap(y.coords()[i] + h * dy + sigma * nyi.gaussian());
      CHECK(std::abs(nx.coords()[i] - ex) < 1e-15);
      CHECK(std::abs(ny.coords()[i] - ey) < 1e-15);
    }
  }

  TEST_CASE("lgda alternating: Y sees the updated X") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = circle({0.1, 0.7}), y = circle({0.3, 0.95});
    const double h = 0.05;
    ParticleStreams xs(5, StreamRole::kX, 2), ys(5, StreamRole::kY, 2);
    auto [nx, ny] = lgda_step_alternating(x, y, k, h, kInf, xs, ys);
    for (std::size_t i = 0; i < 2; ++i) {
      double dx = 0.0;
      for (std::size_t j = 0; j < 2; ++j)
        dx += kTwoPi * std::cos(kTwoPi * x.coords()[i]) * std::sin(kTwoPi * y.coords()[j]) / 2.0;
      CHECK(std::abs(nx.coords()[i] - wrap(x.coords()[i] - h * dx)) < 1e-15);
    }
    for (std::size_t i = 0; i < 2; ++i) {
      double dy = 0.0;
      for (std::size_t j = 0; j < 2; ++j)
        dy += kTwoPi * std::sin(kTwoPi * nx.coords()[j]) * std::cos(kTwoPi * y.coords()[i]) / 2.0;
      CHECK(std::abs(ny.coords()[i] - wrap(y.coords()[i] + h * dy)) < 1e-15);
    }
  }

  TEST_CASE("inner_equilibrate: zero steps and frozen X") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = uniform_circle(10, 1), y = uniform_circle(10, 2);
    ParticleStreams ys(0, StreamRole::kY, 10);
    CHECK(inner_equilibrate(x, y, 0, k, 0.01, 10.0, ys) == y);
    CHECK_THROWS_AS(inner_equilibrate(x, y, -1, k, 0.01, 10.0, ys), std::invalid_argument);
  }

  TEST_CASE("inner_equilibrate: Y against uniform X matches the Gibbs response") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = uniform_circle(10000, 3);
    Ensemble y = circle(std::vector<double>(10000, 0.1));
    ParticleStreams ys(1, StreamRole::kY, 10000);
    y = inner_equilibrate(x, y, 10000, k, 0.01, 10.0, ys);
    const auto gk = grid::GridKernel::from_kernel(k, 256);
    const auto q = grid::gibbs_response(grid::GridDensity::uniform(256), gk, 10.0);
    CHECK(kl_to_reference(y, 10, q) < 0.05);
  }

  TEST_CASE("collect_snapshots ordering") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = uniform_circle(5, 1), y = uniform_circle(2, 2);
    ParticleStreams a(3, StreamRole::kY, 2), b(3, StreamRole::kY, 2);
    auto [final_y, buf] = collect_snapshots(x, y, 3, k, 0.01, 20.0, a);
    REQUIRE(buf.points().size() == 6);
    CHECK(buf.snapshots() == 3);
    CHECK(buf.per_snapshot() == 2);
    Ensemble step = y;
    for (int s = 1; s <= 3; ++s) {
      step = inner_equilibrate(x, step, 1, k, 0.01, 20.0, b);
      for (std::size_t i = 0; i < 2; ++i) CHECK(buf.points().coords()[(s - 1) * 2 + i] == step.coords()[i]);
    }
    CHECK(final_y == step);
    CHECK_THROWS_AS(collect_snapshots(x, y, 0, k, 0.01, 20.0, a), std::invalid_argument);
  }

  TEST_CASE("collect_snapshots: single snapshot and frozen dynamics") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble x = uniform_circle(5, 1), y = uniform_circle(4, 2);
    ParticleStreams a(3, StreamRole::kY, 4), b(3, StreamRole::kY, 4);
    auto [fy, buf] = collect_snapshots(x, y, 1, k, 0.01, 20.0, a);
    CHECK(buf.points() == inner_equilibrate(x, y, 1, k, 0.01, 20.0, b));

    auto [zy, zbuf] = collect_snapshots(x, y, 3, Kernel::sine_torus(0.0), 0.01, kInf, a);
    CHECK(zy == y);
    for (int s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < 4; ++i) CHECK(zbuf.points().coords()[s * 4 + i] == y.coords()[i]);
  }

  TEST_CASE("outer_step examples") {
    const Kernel k = Kernel::sine_torus();
    ParticleStreams xs(0, StreamRole::kX, 200);

    const Ensemble x = uniform_circle(200, 7);
    const SnapshotBuffer zero_buf(1, 3, circle({0.1, 0.2, 0.3}));
    CHECK(outer_step(x, zero_buf, Kernel::sine_torus(0.0), 0.01, kInf, xs) == x);

    const SnapshotBuffer single(1, 1, circle({0.25}));
    const Ensemble one = outer_step(circle({0.1}), single, k, 0.01, kInf, xs);
    CHECK(one.coords()[0] == doctest::Approx(0.1 - 0.01 * kTwoPi * std::cos(0.2 * std::numbers::pi)).epsilon(1e-14));

    const SnapshotBuffer uniform_buf(1, 100000, uniform_circle(100000, 8));
    const double h = 1e-3;
    const Ensemble moved = outer_step(x, uniform_buf, k, h, kInf, xs);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d = moved.coords()[i] - x.coords()[i];
      d -= std::round(d);
      CHECK(std::abs(d / h) < 0.05 * kTwoPi);
    }
  }

  TEST_CASE("drift field is antisymmetric under a half shift") {
    const Kernel k = Kernel::sine_torus();
    const Ensemble y = uniform_circle(50, 4);
    const MeanFeatures yf = k.y_features(y.coords());
    const MeanFeatures xf = k.x_features(uniform_circle(50, 5).coords());
    for (int i = 0; i < 100; ++i) {
      const double a = i / 100.0, b = wrap(a + 0.5);
      double ga = 0, gb = 0, ha = 0, hb = 0;
      k.mean_grad_x(std::span<const double>(&a, 1), yf, std::span<double>(&ga, 1));
      k.mean_grad_x(std::span<const double>(&b, 1), yf, std::span<double>(&gb, 1));
      k.mean_grad_y(std::span<const double>(&a, 1), xf, std::span<double>(&ha, 1));
      k.mean_grad_y(std::span<const double>(&b, 1), xf, std::span<double>(&hb, 1));
      CHECK(std::abs(ga + gb) < 1e-12);
      CHECK(std::abs(ha + hb) < 1e-12);
    }
  }

  TEST_CASE("run_qslgd composition: T=1, k0=k1=0, k2=1") {
    const Kernel k = Kernel::sine_torus();
    RunConfig c;
    c.n_x = 6;
    c.n_y = 4;
    c.k0 = 0;
    c.k1 = 0;
    c.k2 = 1;
    c.T = 1;
    c.beta = 30.0;
    c.seed = 9;
    const RunResult r = run_qslgd(c, k);

    ParticleStreams xs(9, StreamRole::kX, 6), ys(9, StreamRole::kY, 4);
    const Ensemble x0 = initialize(kCircle, InitSpec::uniform(), 6, xs);
    const Ensemble y0 = initialize(kCircle, InitSpec::uniform(), 4, ys);
    auto [y1, buf] = collect_snapshots(x0, y0, 1, k, c.h_y, c.beta, ys);
    const Ensemble x1 = outer_step(x0, buf, k, c.h_x, c.beta, xs);
    CHECK(r.x == x1);
    CHECK(r.y == y1);
    CHECK(r.stats.inner_updates == 1);
    CHECK(r.stats.outer_updates == 1);
  }

  TEST_CASE("update counts") {
    const RunConfig c = small_config();
    const RunResult q = run_qslgd(c, Kernel::sine_torus());
    CHECK(q.stats.inner_updates == c.k0 + c.T * (c.k1 + c.k2));
    CHECK(q.stats.outer_updates == c.T);
    const RunResult l = run_lgda(c, Kernel::sine_torus());
    CHECK(l.stats.outer_updates == c.T);
  }

  TEST_CASE("observer cadence and manifold invariant on the sphere") {
    RunConfig c = small_config();
    const Kernel k = Kernel::polynomial_sphere_gaussian(3, 1);
    std::vector<std::int64_t> seen;
    auto obs = [&](std::int64_t t, const Ensemble& x, const Ensemble& y) {
      seen.push_back(t);
      CHECK(x.valid(1e-12));
      CHECK(y.valid(1e-12));
    };
    run_qslgd(c, k, obs);
    CHECK(seen == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
    seen.clear();
    run_lgda(c, k, obs);
    CHECK(seen.size() == 6);
  }

  TEST_CASE("determinism across reruns and thread counts") {
    RunConfig c = small_config();
    c.n_x = 101;
    c.n_y = 77;
    const Kernel k = Kernel::sine_torus();
    const RunResult a = run_qslgd(c, k);
    const RunResult b = run_qslgd(c, k);
    c.threads = 4;
    const RunResult t = run_qslgd(c, k);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.x == t.x);
    CHECK(a.y == t.y);
    const RunResult l1 = run_lgda(c, k);
    c.threads = 1;
    const RunResult l2 = run_lgda(c, k);
    CHECK(l1.x == l2.x);
    CHECK(l1.y == l2.y);
    c.seed = 1;
    CHECK(!(run_qslgd(c, k).x == a.x));
  }

  TEST_CASE("zero kernel without noise: particles are fixed") {
    RunConfig c = small_config();
    c.beta = kInf;
    const Kernel k = Kernel::sine_torus(0.0);
    ParticleStreams xs(c.seed, StreamRole::kX, c.n_x), ys(c.seed, StreamRole::kY, c.n_y);
    const Ensemble x0 = initialize(kCircle, c.init_x, c.n_x, xs);
    const Ensemble y0 = initialize(kCircle, c.init_y, c.n_y, ys);
    const RunResult q = run_qslgd(c, k);
    CHECK(q.x == x0);
    CHECK(q.y == y0);
    const RunResult l = run_lgda(c, k);
    CHECK(l.x == x0);
    CHECK(l.y == y0);
  }

  TEST_CASE("box initialization") {
    RunConfig c = small_config();
    c.init_x = InitSpec::sub_box({0.0}, {0.25});
    c.init_y = InitSpec::sub_box({0.0}, {0.25});
    c.T = 1;
    c.k0 = 0;
    bool checked = false;
    run_qslgd(c, Kernel::sine_torus(), [&](std::int64_t t, const Ensemble& x, const Ensemble&) {
      if (t != 0) return;
      for (double v : x.coords()) CHECK(v <= 0.25);
      checked = true;
    });
    CHECK(checked);
  }

  TEST_CASE("config validation") {
    const Kernel k = Kernel::sine_torus();
    auto field_of = [&](RunConfig c, bool qs) {
      try {
        c.validate(qs);
      } catch (const ConfigError& e) {
        return e.field();
      }
      return std::string();
    };
    RunConfig c = small_config();
    CHECK(field_of(c, true).empty());
    c.n_x = 0;
    CHECK(field_of(c, true) == "n_x");
    c = small_config();
    c.k2 = 0;
    CHECK(field_of(c, true) == "k2");
    CHECK(field_of(c, false).empty());
    c = small_config();
    c.T = 0;
    CHECK(field_of(c, false) == "T");
    c = small_config();
    c.h_x = 0.0;
    CHECK(field_of(c, true) == "h_x");
    c = small_config();
    c.beta = -1.0;
    CHECK(field_of(c, true) == "beta");
    c = small_config();
    c.k1 = -1;
    CHECK(field_of(c, true) == "k1");
    c = small_config();
    c.h_y = 0.02;
    CHECK_THROWS_AS(run_lgda(c, k), ConfigError);
  }

  TEST_CASE("blow-up carries the iteration index") {
    Kernel::Matrices a;
    for (auto& m : a) m = Eigen::MatrixXd::Constant(3, 3, 1e308);
    const Kernel k = Kernel::polynomial_sphere(a);
    RunConfig c = small_config();
    try {
      run_lgda(c, k);
      FAIL("expected a blow-up");
    } catch (const NumericalBlowUp& e) {
      CHECK(e.iteration() == 1);
    }
    try {
      run_qslgd(c, k);
      FAIL("expected a blow-up");
    } catch (const NumericalBlowUp& e) {
      CHECK(e.iteration() == 0);
    }
  }

  TEST_CASE("small beta: LGDA and QSLGD agree within a factor 2") {
    const Kernel k = Kernel::sine_torus();
    double kl_lgda = 0.0, kl_qs = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RunConfig c;
      c.n_x = c.n_y = 1000;
      c.beta = 1.0;
      c.seed = seed;
      c.init_x = c.init_y = InitSpec::sub_box({0.0}, {0.25});
      c.T = 3000;
      kl_lgda += kl_to_reference(run_lgda(c, k).x, 10);
      c.k0 = 100;
      c.k1 = 5;
      c.k2 = 1;
      c.T = 600;
      kl_qs += kl_to_reference(run_qslgd(c, k).x, 10);
    }
    MESSAGE("beta=1 mean KL: lgda " << kl_lgda / 5 << ", qslgd " << kl_qs / 5);
    CHECK(kl_lgda < 2.0 * kl_qs);
    CHECK(kl_qs < 2.0 * kl_lgda);
  }
}

TEST_SUITE("slow") {
  TEST_CASE("inner_equilibrate: pure diffusion equidistributes") {
    const Kernel zero = Kernel::sine_torus(0.0);
    const Ensemble x = uniform_circle(10, 1);
    Ensemble y = circle(std::vector<double>(10000, 0.3));
    ParticleStreams ys(2, StreamRole::kY, 10000);
    // beta = 100 with h = 0.01: per-step variance 2e-4, so 1e5 steps spread
    // each particle far beyond the unit circle.
    y = inner_equilibrate(x, y, 100000, zero, 0.01, 100.0, ys);
    CHECK(kl_to_reference(y, 10) < 0.02);
  }
}
