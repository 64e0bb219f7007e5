#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rotorsense/errors.hpp"
#include "rotorsense/motion_comp.hpp"
#include "rotorsense/propeller_sim.hpp"

using namespace rotorsense;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Event> blade_batch(double rpm, Timestamp t0, Timestamp len, std::uint64_t seed, int spin = 1,
                               double phase = 0.0) {
  PropellerSpec p;
  p.center_x = 100;
  p.center_y = 100;
  p.spin = spin;
  p.initial_phase = phase;
  p.speed = SpeedProfile::constant(rpm);
  const auto s = simulate_propellers({p}, {}, {200, 200}, t0 + len, max_tick_for({p}), seed);
  std::vector<Event> out;
  for (const auto& e : s.stream.events)
    if (e.t >= t0 && e.t <= t0 + len) out.push_back(e);
  return out;
}

// Direct evaluation: warp, round to the nearest pixel, histogram, sum terms.
long double oracle_objective(const std::vector<Event>& ev, Point2 c, Timestamp t_ref, double omega, const Patch& patch,
                             double eps, int spin = 1) {
  std::vector<int> h(patch.area(), 0);
  for (const auto& e : ev) {
    const double a = spin * omega * (double(e.t) - double(t_ref)) / 1e6;
    const double x = c.x + std::cos(a) * (e.x - c.x) - std::sin(a) * (e.y - c.y);
    const double y = c.y + std::sin(a) * (e.x - c.x) + std::cos(a) * (e.y - c.y);
    const long i = std::lround(std::floor(x + 0.5)) - patch.x0, j = std::lround(std::floor(y + 0.5)) - patch.y0;
    if (i >= 0 && j >= 0 && i < patch.width && j < patch.height) ++h[std::size_t(j * patch.width + i)];
  }
  long double r = 0;
  for (int v : h) r += std::exp((long double)v) + 1.0L / (std::exp((long double)v) - 1.0L + eps);
  return r;
}

const Point2 kCenter{100, 100};

}  // namespace

TEST_CASE("warp examples") {
  const std::vector<Event> ev{{1'000'000, 110, 100, 1}, {0, 105, 97, -1}};
  const auto w0 = warp(ev, kCenter, 0, 0.0);
  CHECK(w0[0].x == 110);
  CHECK(w0[0].y == 100);
  // omega * dt = pi / 2 takes (10, 0) to (0, 10)
  const auto w = warp(ev, kCenter, 0, kPi / 2);
  CHECK(w[0].x == doctest::Approx(100).epsilon(1e-12));
  CHECK(w[0].y == doctest::Approx(110));
  // t = t_ref is never moved
  for (double omega : {0.0, 1.0, 314.0, 5000.0}) {
    const auto v = warp(ev, kCenter, 0, omega);
    CHECK(v[1].x == 105);
    CHECK(v[1].y == 97);
  }
  // the opposite spin undoes the other direction
  const auto back = warp(ev, kCenter, 0, kPi / 2, -1);
  CHECK(back[0].y == doctest::Approx(90));
}

TEST_CASE("accumulate rasterizes to the nearest pixel") {
  const Patch patch{0, 0, 4, 3};
  auto img = accumulate(std::vector<Point2>{{1.2, 1.1}, {0.6, 0.7}, {1.49, 0.5}}, patch);
  CHECK(img.at(1, 1) == 3);
  CHECK(img.total() == 3);
  img = accumulate(std::vector<Point2>{}, patch);
  CHECK(img.total() == 0);
  img = accumulate(std::vector<Point2>{{-0.6, 0}, {3.5, 0}, {-0.5, 0}, {3.49, 2.49}}, patch);
  CHECK(img.dropped == 2);
  CHECK(img.at(0, 0) == 1);
  CHECK(img.at(3, 2) == 1);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 9.49);
  std::vector<Point2> pts(1000);
  for (auto& p : pts) p = {u(rng), u(rng)};
  CHECK(accumulate(pts, Patch{0, 0, 10, 10}).total() == 1000);
}

TEST_CASE("reward terms") {
  WarpedImage img;
  img.patch = {0, 0, 2, 1};
  img.counts = {2, 0};
  CHECK(double(reward_accumulation(img)) == doctest::Approx(std::exp(2.0) + 1.0));
  CHECK(double(reward_accumulation(img)) == doctest::Approx(8.389).epsilon(1e-4));
  img.patch = {0, 0, 10, 10};
  img.counts.assign(100, 0);
  CHECK(reward_accumulation(img) == 100.0L);
  CHECK(reward_sparsity(img, 1.0) == 100.0L);
  img.counts[0] = 1;
  CHECK(double(reward_sparsity(img, 1.0)) == doctest::Approx(99.0 + std::exp(-1.0)));
  CHECK_THROWS_AS(reward_sparsity(img, 0.0), ConfigError);

  // moving an event from a 1-count pixel onto a 3-count pixel raises r_acc
  WarpedImage a, b;
  a.patch = b.patch = {0, 0, 3, 1};
  a.counts = {1, 3, 0};
  b.counts = {0, 4, 0};
  CHECK(reward_accumulation(b) > reward_accumulation(a));
  // concentrating a fixed total onto fewer pixels raises r_spa
  a.counts = {1, 1, 2};
  b.counts = {0, 2, 2};
  CHECK(reward_sparsity(b, 1.0) > reward_sparsity(a, 1.0));
}

TEST_CASE("objective of an empty batch is area * (1 + 1/eps)") {
  const Patch patch{10, 10, 7, 5};
  for (double eps : {1.0, 0.5, 2.0}) {
    ObjectiveParams prm;
    prm.epsilon = eps;
    const Score r = objective(std::vector<Event>{}, kCenter, 0, 100.0, patch, prm);
    CHECK(double(r) == doctest::Approx(35 * (1 + 1 / eps)));
  }
}

TEST_CASE("objective agrees with a direct evaluation") {
  const auto ev = blade_batch(3000, 1000, 6000, 2);
  const Patch patch = patch_for(ev, kCenter);
  for (double omega : {0.0, 100.0, 250.0, 314.159, 400.0}) {
    for (int spin : {1, -1}) {
      const long double want = oracle_objective(ev, kCenter, 1000, omega, patch, 1.0, spin);
      const Score got = objective(ev, kCenter, 1000, omega, patch, {}, spin);
      CHECK(double(got / want) == doctest::Approx(1.0).epsilon(1e-12));
      PreparedBatch pb(ev, kCenter, 1000, patch);
      // same terms, different summation order
      CHECK(double(pb.objective(omega, spin, ObjectiveParams{}) / got) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("objective peaks at the true speed and ignores polarity") {
  for (double rpm : {1000.0, 3000.0, 6000.0}) {
    const double w = rpm_to_rad_s(rpm);
    auto ev = blade_batch(rpm, 2000, 8000, 5);
    const Patch patch = patch_for(ev, kCenter);
    const Score at = objective(ev, kCenter, 2000, w, patch);
    CHECK(at > objective(ev, kCenter, 2000, 0.9 * w, patch));
    CHECK(at > objective(ev, kCenter, 2000, 1.1 * w, patch));
    for (auto& e : ev) e.p = std::int8_t(-e.p);
    CHECK(objective(ev, kCenter, 2000, w, patch) == at);
  }
}

TEST_CASE("serial and parallel grids are identical") {
  const auto ev = blade_batch(4500, 0, 5000, 7);
  const PreparedBatch pb(ev, kCenter, ev.front().t, patch_for(ev, kCenter));
  std::vector<double> omegas;
  for (int i = 0; i < 97; ++i) omegas.push_back(100.0 + 7.3 * i);
  const auto a = objective_grid(pb, omegas, 1, {}, Execution::serial);
  const auto b = objective_grid(pb, omegas, 1, {}, Execution::parallel);
  CHECK(a == b);
}

TEST_CASE("warping with the true speed collapses events onto the blade at t_ref") {
  // Blade mask at t_ref from the simulator's coverage rule, widened by one
  // pixel for the edge pixels whose flip produced the events.
  const double rpm = 3000, L = 60, W = 8;
  const auto ev = blade_batch(rpm, 3000, 5000, 8, 1, 0.4);
  const double w = rpm_to_rad_s(rpm);
  const auto pts = warp(ev, kCenter, 3000, w);
  const double theta = w * 3000e-6;
  auto covered = [&](int x, int y) {
    const double dx = x - 100.0, dy = y - 100.0, r = std::hypot(dx, dy);
    if (r < W || r > L) return false;
    const double half = std::asin(std::min(1.0, 0.5 * W / r));
    for (int b = 0; b < 2; ++b) {
      // blade axis angle for spin +1: phase0 + b*pi - theta
      double d = std::remainder(std::atan2(dy, dx) - (0.4 + b * kPi - theta), 2 * kPi);
      if (std::abs(d) <= half) return true;
    }
    return false;
  };
  std::size_t in = 0;
  for (const auto& p : pts) {
    const int x = int(std::floor(p.x + 0.5)), y = int(std::floor(p.y + 0.5));
    bool near = false;
    for (int oy = -1; oy <= 1 && !near; ++oy)
      for (int ox = -1; ox <= 1 && !near; ++ox) near = covered(x + ox, y + oy);
    in += near;
  }
  CHECK(double(in) / double(pts.size()) >= 0.95);
}

// A 5 ms batch at 3000 RPM sweeps 1.57 rad; one pixel at the 60 px tip is
// about 0.5% of that sweep, so this sits at the rasterization limit.
TEST_CASE("estimate_speed on a short clean batch") {
  EstimatorConfig cfg;
  cfg.bracket_lo_rpm = 1500;
  cfg.bracket_hi_rpm = 4500;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ev = blade_batch(3000, 1000 + seed * 777, 5000, seed, 1, 0.3 * double(seed));
    const auto est = estimate_speed(ev, kCenter, cfg);
    CHECK(std::abs(est.rpm() - 3000) / 3000 <= 0.005);
    CHECK(est.objective_value >= est.grid_best_objective);
    CHECK(est.n_events == ev.size());
    CHECK(est.t_ref == ev.front().t);
    CHECK(est.rpm() == doctest::Approx(est.omega * 60 / (2 * kPi)));
    const Score direct = objective(ev, kCenter, est.t_ref, est.omega, patch_for(ev, kCenter));
    CHECK(double(est.objective_value / direct) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("estimate_speed rejects empty and structureless input") {
  EstimatorConfig cfg;
  CHECK_THROWS_AS(estimate_speed(std::vector<Event>{}, kCenter, cfg), NumericalError);
  // uniform noise over the patch
  std::mt19937_64 rng(4);
  std::vector<Event> noise;
  for (Timestamp t = 0; t < 8000; t += 2)
    noise.push_back({t, std::uint16_t(40 + rng() % 121), std::uint16_t(40 + rng() % 121), 1});
  CHECK_THROWS_AS(estimate_speed(noise, kCenter, cfg), NumericalError);
}

TEST_CASE("estimator config validation") {
  EstimatorConfig c;
  c.bracket_lo_rpm = 3000;
  c.bracket_hi_rpm = 2000;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.grid = 2;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.objective.epsilon = 0;
  CHECK_THROWS_AS(objective(std::vector<Event>{}, kCenter, 0, 1.0, Patch{0, 0, 1, 1}, c.objective), ConfigError);
}
