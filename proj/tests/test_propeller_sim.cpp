#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "rotorsense/errors.hpp"
#include "rotorsense/propeller_sim.hpp"

using namespace rotorsense;

namespace {

PropellerSpec prop(double rpm) {
  PropellerSpec s;
  s.center_x = 100;
  s.center_y = 100;
  s.speed = SpeedProfile::constant(rpm);
  return s;
}

const SensorGeometry kGeom{200, 200};

}  // namespace

TEST_CASE("phase integral matches numeric quadrature of the profile") {
  const SpeedProfile sp({{0, 1000}, {2000, 1000}, {5000, 4000}, {5000, 2500}, {9000, 6000}});
  for (double t : {0.0, 700.0, 2000.0, 3100.0, 4999.0, 5000.0, 7000.0, 12000.0}) {
    // composite midpoint rule on 1 us cells, rad
    double acc = 0.0;
    const int n = int(t);
    for (int i = 0; i < n; ++i) acc += sp.rpm_at(i + 0.5) * 2 * std::numbers::pi / 60.0 * 1e-6;
    acc += sp.rpm_at(n + 0.5 * (t - n)) * 2 * std::numbers::pi / 60.0 * 1e-6 * (t - n);
    CHECK(sp.phase_at(t) == doctest::Approx(acc).epsilon(1e-6));
  }
  CHECK(sp.rpm_at(5000) == doctest::Approx(2500));
  CHECK(sp.rpm_at(4999.999) == doctest::Approx(4000).epsilon(1e-3));
  CHECK_THROWS_AS(SpeedProfile({{0, -1}}), ConfigError);
  CHECK_THROWS_AS(SpeedProfile({{5, 1}, {4, 1}}), ConfigError);
}

TEST_CASE("still propeller and no noise emit nothing") {
  const auto s = simulate_propellers({prop(0)}, {}, kGeom, 20000, 10, 1);
  CHECK(s.stream.events.empty());
  CHECK(s.truth.t.size() == 2001);
}

TEST_CASE("blade events stay inside the blade disc") {
  const auto p = prop(3000);
  const auto s = simulate_propellers({p}, {}, kGeom, 20000, max_tick_for({p}), 1);
  REQUIRE(!s.stream.events.empty());
  std::size_t on = 0;
  for (std::size_t i = 0; i < s.stream.events.size(); ++i) {
    const auto& e = s.stream.events[i];
    CHECK(std::hypot(e.x - p.center_x, e.y - p.center_y) <= p.blade_length);
    CHECK(s.origin[i] == 0);
    on += e.p > 0;
  }
  // leading and trailing edges flip the same pixels
  CHECK(double(on) / double(s.stream.events.size()) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(is_time_sorted(s.stream.events));
}

TEST_CASE("fixed pixel fires with the blade-pass period") {
  // period = 60 / (rpm * blades) s: 10 ms at 3000 RPM, 2 blades
  for (double rpm : {1500.0, 3000.0, 6000.0}) {
    const auto p = prop(rpm);
    const Timestamp tick = max_tick_for({p});
    const auto s = simulate_propellers({p}, {}, kGeom, 200000, tick, 3);
    std::vector<Timestamp> times;
    for (const auto& e : s.stream.events)
      if (e.x == 140 && e.y == 100 && e.p > 0) times.push_back(e.t);
    REQUIRE(times.size() >= 4);
    const double expected = 60.0 / (rpm * 2) * 1e6;
    for (std::size_t i = 1; i < times.size(); ++i)
      CHECK(std::abs(double(times[i] - times[i - 1]) - expected) <= double(tick) + 1e-9);
  }
}

TEST_CASE("spin sense: positive spin turns the blade angle clockwise in atan2") {
  // For spin s, a +1 event at angle psi is painted when s * (phase0 - psi) - half
  // equals the rotation angle theta(t) modulo 2 pi / blades, so
  // psi + s * theta(t) is constant modulo 2 pi / blades up to the half-width.
  for (int spin : {1, -1}) {
    auto p = prop(3000);
    p.spin = spin;
    const auto s = simulate_propellers({p}, {}, kGeom, 20000, max_tick_for({p}), 5);
    std::complex<double> right{0, 0}, wrong{0, 0};
    std::size_t n = 0;
    for (const auto& e : s.stream.events) {
      const double r = std::hypot(e.x - 100.0, e.y - 100.0);
      if (e.p < 0 || r < 40 || r > 55) continue;
      const double psi = std::atan2(e.y - 100.0, e.x - 100.0);
      const double theta = p.speed.phase_at(double(e.t));
      right += std::polar(1.0, 2.0 * (psi + spin * theta));
      wrong += std::polar(1.0, 2.0 * (psi - spin * theta));
      ++n;
    }
    REQUIRE(n > 100);
    CHECK(std::abs(right) / double(n) > 0.9);
    CHECK(std::abs(wrong) / double(n) < 0.3);
  }
}

TEST_CASE("tick too coarse names the required tick") {
  const auto p = prop(10000);
  const Timestamp need = max_tick_for({p});
  // tip speed 10000 RPM * 60 px = 62.8 px/ms
  CHECK(need == Timestamp(std::floor(1.0 / (10000 * 2 * std::numbers::pi / 60 * 60 * 1e-6))));
  try {
    simulate_propellers({p}, {}, kGeom, 1000, need + 1, 1);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(std::to_string(need)) != std::string::npos);
  }
  CHECK_NOTHROW(simulate_propellers({p}, {}, kGeom, 1000, need, 1));
}

TEST_CASE("speed jump on a tick boundary") {
  auto p = prop(3000);
  p.speed = SpeedProfile::step(3000, 4500, 4000);
  const auto sim = simulate_propellers({p}, {}, kGeom, 8000, 20, 1);
  CHECK(!sim.stream.events.empty());
  CHECK(sim.truth.rpm[0].front() == 3000);
  CHECK(sim.truth.rpm[0].back() == 4500);
}

TEST_CASE("simulation is deterministic per seed") {
  NoiseSpec noise;
  noise.background_rate = 5;
  noise.hot_pixel_count = 3;
  noise.hot_pixel_rate = 200;
  noise.vibration_jitter_px = 0.5;
  const auto p = prop(3000);
  const auto a = simulate_propellers({p}, noise, kGeom, 30000, max_tick_for({p}), 42);
  const auto b = simulate_propellers({p}, noise, kGeom, 30000, max_tick_for({p}), 42);
  const auto c = simulate_propellers({p}, noise, kGeom, 30000, max_tick_for({p}), 43);
  CHECK(a.stream.events == b.stream.events);
  CHECK(a.origin == b.origin);
  CHECK(a.stream.events != c.stream.events);
}

TEST_CASE("noise sources follow their rates") {
  NoiseSpec noise;
  noise.background_rate = 10;
  noise.hot_pixel_count = 20;
  noise.hot_pixel_rate = 500;
  const Timestamp dur = 500000;
  const auto s = simulate_propellers({}, noise, kGeom, dur, 100, 9);
  std::size_t bg = 0, hot = 0, bg_on = 0;
  std::map<std::pair<int, int>, int> hot_px;
  for (std::size_t i = 0; i < s.origin.size(); ++i) {
    if (s.origin[i] == kOriginBackground) ++bg, bg_on += s.stream.events[i].p > 0;
    if (s.origin[i] == kOriginHotPixel) ++hot, ++hot_px[{s.stream.events[i].x, s.stream.events[i].y}];
  }
  const double bg_mean = 10.0 * 200 * 200 * 0.5;
  CHECK(std::abs(double(bg) - bg_mean) < 5 * std::sqrt(bg_mean));
  CHECK(bg_on == bg);  // default background is all ON events
  const double hot_mean = 20 * 500 * 0.5;
  CHECK(std::abs(double(hot) - hot_mean) < 5 * std::sqrt(hot_mean));
  CHECK(hot_px.size() <= 20);
}

TEST_CASE("flight traces follow the command pattern") {
  DroneSpec d;
  d.duration_s = 1.0;
  d.jitter_rpm = 0.0;
  const auto hover = simulate_flight({{0, Command::hover, 1}}, d, {}, 1);
  for (const auto& trace : hover.rpm)
    for (double r : trace) CHECK(r == doctest::Approx(d.hover_rpm));

  const auto climb = simulate_flight({{0, Command::climb, 1}}, d, {}, 1);
  for (const auto& trace : climb.rpm) CHECK(trace.back() == doctest::Approx(d.hover_rpm + 300).epsilon(1e-6));
  CHECK(climb.truth.back().command == Command::climb);
  CHECK(climb.truth.back().position[2] > d.initial_position[2]);

  // yaw: +delta on CW rotors, -delta on CCW
  const auto yaw = command_rpm(d, Command::yaw);
  for (std::size_t i = 0; i < d.rotors.size(); ++i)
    CHECK(yaw[i] == d.hover_rpm + (d.rotors[i].spin > 0 ? 300 : -300));
  // roll splits left/right, pitch splits front/back, mirrored by sign
  const auto roll = command_rpm(d, Command::roll), roll_m = command_rpm(d, Command::roll, -1);
  const auto pitch = command_rpm(d, Command::pitch);
  for (std::size_t i = 0; i < d.rotors.size(); ++i) {
    CHECK(roll[i] == d.hover_rpm + (d.rotors[i].body_x < 0 ? 300 : -300));
    CHECK(roll_m[i] == d.hover_rpm - (d.rotors[i].body_x < 0 ? 300 : -300));
    CHECK(pitch[i] == d.hover_rpm + (d.rotors[i].body_y < 0 ? 300 : -300));
  }
  CHECK_THROWS_AS(simulate_flight({{1.0, Command::hover, 1}, {0.5, Command::climb, 1}}, d, {}, 1), ConfigError);
}

TEST_CASE("jittered hover averages to the hover speed") {
  DroneSpec d;
  d.duration_s = 2.0;
  d.jitter_rpm = 60.0;
  const auto f = simulate_flight({{0, Command::hover, 1}}, d, {}, 4);
  for (const auto& trace : f.rpm) {
    double m = 0;
    for (double r : trace) m += r;
    m /= double(trace.size());
    CHECK(std::abs(m - d.hover_rpm) < 4 * 60.0 / std::sqrt(double(trace.size())));
  }
}

TEST_CASE("GPS of a static drone averages to the truth") {
  // 10^4 samples, sigma 1 m: 3 sigma / sqrt(N) = 0.03 m < 0.05 m
  DroneSpec d;
  d.gps_sigma_m = 1.0;
  d.gps_rate_hz = 100.0;
  d.duration_s = 100.0;
  d.sample_rate_hz = 200.0;
  const auto f = simulate_flight({{0, Command::hover, 1}}, d, {}, 11);
  REQUIRE(f.gps.size() >= 10000);
  Vec3 mean{0, 0, 0};
  for (const auto& g : f.gps)
    for (int k = 0; k < 3; ++k) mean[k] += g.position[k] / double(f.gps.size());
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mean[k] - d.initial_position[k]) < 0.05);
}

TEST_CASE("thrust calibration balances gravity at hover") {
  const auto rotors = quad_x_layout();
  const std::vector<double> w(4, 314.0);
  const auto m = ThrustModel::calibrate(w, rotors);
  double s = 0;
  for (double x : w) s += x * x;
  CHECK(m.thrust_per_mass * s == doctest::Approx(kGravity));
  const auto a = m.acceleration(Command::hover, w);
  CHECK(a[2] == 0.0);
  std::vector<double> up(4, 330.0);
  CHECK(m.acceleration(Command::climb, up)[2] == doctest::Approx(m.thrust_per_mass * (4 * 330.0 * 330.0 - s)));
  CHECK(m.acceleration(Command::yaw, up) == Vec3{0, 0, 0});
}

TEST_CASE("command dataset is balanced and shaped") {
  DroneSpec d;
  d.jitter_rpm = 60.0;
  const auto ds = generate_command_dataset(d, 10, 100, 3);
  REQUIRE(ds.size() == 60);
  std::map<Command, int> count;
  for (const auto& s : ds) {
    ++count[s.label];
    REQUIRE(s.rpm.size() == 4);
    for (const auto& ch : s.rpm) CHECK(ch.size() == 100);
  }
  for (Command c : kAllCommands) CHECK(count[c] == 10);
}
