#include "rotorsense/propeller_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "rotorsense/errors.hpp"

namespace rotorsense {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_2pi(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0 ? a + kTwoPi : a;
}

struct Crossing {
  double phase;  // rotation angle mod 2*pi at which the pixel flips
  std::uint16_t x, y;
  std::int8_t p;
};

// Coverage flips of every pixel swept by one propeller, sorted by phase.
std::vector<Crossing> crossing_table(const PropellerSpec& s, const SensorGeometry& g) {
  std::vector<Crossing> table;
  const double hub = s.blade_width;
  const int r_max = static_cast<int>(std::ceil(s.blade_length)) + 1;
  const int x0 = std::max(0, static_cast<int>(std::floor(s.center_x)) - r_max);
  const int x1 = std::min(g.width - 1, static_cast<int>(std::ceil(s.center_x)) + r_max);
  const int y0 = std::max(0, static_cast<int>(std::floor(s.center_y)) - r_max);
  const int y1 = std::min(g.height - 1, static_cast<int>(std::ceil(s.center_y)) + r_max);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - s.center_x, dy = y - s.center_y;
      const double r = std::hypot(dx, dy);
      if (r < hub || r > s.blade_length) continue;
      const double half = std::asin(std::min(1.0, 0.5 * s.blade_width / r));
      const double psi = std::atan2(dy, dx);
      for (int b = 0; b < s.n_blades; ++b) {
        const double c = s.spin * (s.initial_phase + kTwoPi * b / s.n_blades - psi);
        table.push_back({wrap_2pi(c - half), std::uint16_t(x), std::uint16_t(y), std::int8_t(1)});
        table.push_back({wrap_2pi(c + half), std::uint16_t(x), std::uint16_t(y), std::int8_t(-1)});
      }
    }
  }
  std::sort(table.begin(), table.end(), [](const Crossing& a, const Crossing& b) {
    if (a.phase != b.phase) return a.phase < b.phase;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });
  return table;
}

void validate_spec(const PropellerSpec& s) {
  if (s.n_blades < 1) throw ConfigError("propeller needs at least one blade");
  if (!(s.blade_width > 0.0) || !(s.blade_length > s.blade_width))
    throw ConfigError("propeller needs blade_length > blade_width > 0");
  if (s.spin != 1 && s.spin != -1) throw ConfigError("propeller spin must be +1 or -1");
  if (s.speed.min_rpm() < 0.0) throw ConfigError("speed profile must be nonnegative");
}

struct Tagged {
  Event e;
  std::int16_t origin;
};

}  // namespace

// ---- SpeedProfile ----

SpeedProfile::SpeedProfile(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw ConfigError("speed profile needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i].rpm) || knots_[i].rpm < 0.0)
      throw ConfigError("speed profile RPM must be finite and nonnegative");
    if (knots_[i].t_us < 0.0) throw ConfigError("speed profile knots must have t >= 0");
    if (i > 0 && knots_[i].t_us < knots_[i - 1].t_us)
      throw ConfigError("speed profile knots must be time-ordered");
  }
}

SpeedProfile SpeedProfile::constant(double rpm) { return SpeedProfile({{0.0, rpm}}); }

SpeedProfile SpeedProfile::step(double before, double after, double t_step_us) {
  return SpeedProfile({{t_step_us, before}, {t_step_us, after}});
}

SpeedProfile SpeedProfile::ramp(double from, double to, double t0_us, double t1_us) {
  return SpeedProfile({{t0_us, from}, {t1_us, to}});
}

double SpeedProfile::rpm_at(double t) const {
  if (t < knots_.front().t_us) return knots_.front().rpm;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                             [](double v, const Knot& k) { return v < k.t_us; });
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  if (i + 1 >= knots_.size()) return knots_.back().rpm;
  const Knot& a = knots_[i];
  const Knot& b = knots_[i + 1];
  const double f = (t - a.t_us) / (b.t_us - a.t_us);
  return a.rpm + f * (b.rpm - a.rpm);
}

double SpeedProfile::phase_at(double t) const {
  // integral of rpm over [0, t] in rpm*us
  const Knot& first = knots_.front();
  if (t <= first.t_us) return rpm_to_rad_s(first.rpm * t) * 1e-6;
  double acc = first.rpm * first.t_us;
  for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
    const Knot& a = knots_[i];
    const Knot& b = knots_[i + 1];
    if (b.t_us == a.t_us) continue;
    const double end = std::min(t, b.t_us);
    const double rpm_end = a.rpm + (end - a.t_us) / (b.t_us - a.t_us) * (b.rpm - a.rpm);
    acc += 0.5 * (a.rpm + rpm_end) * (end - a.t_us);
    if (t <= b.t_us) return rpm_to_rad_s(acc) * 1e-6;
  }
  acc += knots_.back().rpm * (t - knots_.back().t_us);
  return rpm_to_rad_s(acc) * 1e-6;
}

double SpeedProfile::max_rpm() const {
  return std::max_element(knots_.begin(), knots_.end(), [](const Knot& a, const Knot& b) { return a.rpm < b.rpm; })
      ->rpm;
}

double SpeedProfile::min_rpm() const {
  return std::min_element(knots_.begin(), knots_.end(), [](const Knot& a, const Knot& b) { return a.rpm < b.rpm; })
      ->rpm;
}

double PropellerTruth::rpm_at(std::size_t prop, double t_us) const {
  const auto& r = rpm.at(prop);
  if (t.empty()) return 0.0;
  if (t_us <= double(t.front())) return r.front();
  if (t_us >= double(t.back())) return r.back();
  auto it = std::upper_bound(t.begin(), t.end(), t_us, [](double v, Timestamp s) { return v < double(s); });
  const std::size_t i = static_cast<std::size_t>(it - t.begin());
  const double f = (t_us - double(t[i - 1])) / double(t[i] - t[i - 1]);
  return r[i - 1] + f * (r[i] - r[i - 1]);
}

Timestamp max_tick_for(const std::vector<PropellerSpec>& specs) {
  double worst = 0.0;  // px/us at the tip
  for (const auto& s : specs) worst = std::max(worst, rpm_to_rad_s(s.speed.max_rpm()) * s.blade_length * 1e-6);
  if (worst <= 0.0) return 1000;
  return std::max<Timestamp>(1, static_cast<Timestamp>(std::floor(1.0 / worst)));
}

SimulatedStream simulate_propellers(const std::vector<PropellerSpec>& specs, const NoiseSpec& noise,
                                    const SensorGeometry& geometry, Timestamp duration_us, Timestamp tick_us,
                                    std::uint64_t seed) {
  if (geometry.width <= 0 || geometry.height <= 0 || geometry.width > 65535 || geometry.height > 65535)
    throw ConfigError("sensor geometry must be positive and fit 16 bits");
  if (tick_us == 0) throw ConfigError("simulation tick must be positive");
  if (noise.background_rate < 0 || noise.hot_pixel_rate < 0 || noise.hot_pixel_count < 0 ||
      noise.vibration_jitter_px < 0 || noise.background_on_fraction < 0 || noise.background_on_fraction > 1)
    throw ConfigError("noise rates must be nonnegative");
  for (const auto& s : specs) validate_spec(s);
  const Timestamp needed = max_tick_for(specs);
  if (tick_us > needed)
    throw ConfigError("tick " + std::to_string(tick_us) + " us lets a blade tip move more than 1 px; need tick <= " +
                      std::to_string(needed) + " us");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const Timestamp n_ticks = duration_us / tick_us;

  SimulatedStream out;
  out.stream.geometry = geometry;
  out.truth.tick_us = tick_us;
  out.truth.t.resize(n_ticks + 1);
  for (Timestamp j = 0; j <= n_ticks; ++j) out.truth.t[j] = j * tick_us;
  out.truth.rpm.resize(specs.size());

  std::vector<Tagged> tagged;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const PropellerSpec& s = specs[k];
    auto& rpm = out.truth.rpm[k];
    rpm.resize(n_ticks + 1);
    for (Timestamp j = 0; j <= n_ticks; ++j) rpm[j] = s.speed.rpm_at(double(j * tick_us));

    const std::vector<Crossing> table = crossing_table(s, geometry);
    if (table.empty()) continue;
    auto first_after = [&](double phase) {
      return static_cast<std::size_t>(
          std::upper_bound(table.begin(), table.end(), phase,
                           [](double v, const Crossing& c) { return v < c.phase; }) -
          table.begin());
    };
    auto emit = [&](const Crossing& c, Timestamp t) {
      int x = c.x, y = c.y;
      if (noise.vibration_jitter_px > 0) {
        x = static_cast<int>(std::lround(c.x + noise.vibration_jitter_px * jitter(rng)));
        y = static_cast<int>(std::lround(c.y + noise.vibration_jitter_px * jitter(rng)));
        x = std::clamp(x, 0, geometry.width - 1);
        y = std::clamp(y, 0, geometry.height - 1);
      }
      tagged.push_back({Event{t, std::uint16_t(x), std::uint16_t(y), c.p}, std::int16_t(k)});
    };

    double prev = s.speed.phase_at(0.0);
    for (Timestamp j = 1; j <= n_ticks; ++j) {
      const double t_prev = double((j - 1) * tick_us), t_cur = double(j * tick_us);
      const double cur = s.speed.phase_at(t_cur);
      // The painted phase advance must agree with the recorded truth.
      bool knot_inside = false;
      for (const auto& kn : s.speed.knots())
        if (kn.t_us >= t_prev && kn.t_us <= t_cur) knot_inside = true;
      if (!knot_inside) {
        const double trap = rpm_to_rad_s(0.5 * (rpm[j - 1] + rpm[j])) * double(tick_us) * 1e-6;
        if (std::abs((cur - prev) - trap) > 1e-9 * (1.0 + std::abs(trap)))
          throw std::logic_error("simulator phase advance disagrees with ground-truth RPM");
      }
      if (cur > prev) {
        const double base = std::floor(prev / kTwoPi) * kTwoPi;
        const double a = prev - base, b = cur - base;
        const std::size_t i0 = first_after(a);
        const std::size_t i1 = first_after(std::min(b, kTwoPi));
        for (std::size_t i = i0; i < i1; ++i) emit(table[i], j * tick_us);
        if (b >= kTwoPi) {
          const std::size_t i2 = first_after(b - kTwoPi);
          for (std::size_t i = 0; i < std::min(i2, i0); ++i) emit(table[i], j * tick_us);
        }
      }
      prev = cur;
    }
  }

  // Background activity: uniform in space and time.
  const double span_s = double(duration_us) * 1e-6;
  if (noise.background_rate > 0 && duration_us > 0) {
    std::poisson_distribution<long long> count(noise.background_rate * geometry.width * geometry.height * span_s);
    const long long n = count(rng);
    std::uniform_int_distribution<Timestamp> t_dist(0, duration_us);
    std::uniform_int_distribution<int> x_dist(0, geometry.width - 1), y_dist(0, geometry.height - 1);
    std::bernoulli_distribution on(noise.background_on_fraction);
    for (long long i = 0; i < n; ++i) {
      const Timestamp t = t_dist(rng);
      const int x = x_dist(rng), y = y_dist(rng);
      tagged.push_back({Event{t, std::uint16_t(x), std::uint16_t(y), std::int8_t(on(rng) ? 1 : -1)},
                        kOriginBackground});
    }
  }
  // Hot pixels: fixed location and polarity, Poisson firing.
  if (noise.hot_pixel_count > 0 && noise.hot_pixel_rate > 0 && duration_us > 0) {
    std::uniform_int_distribution<int> x_dist(0, geometry.width - 1), y_dist(0, geometry.height - 1);
    std::bernoulli_distribution positive(0.5);
    std::exponential_distribution<double> gap(noise.hot_pixel_rate * 1e-6);
    for (int h = 0; h < noise.hot_pixel_count; ++h) {
      const int x = x_dist(rng), y = y_dist(rng);
      const std::int8_t p = positive(rng) ? 1 : -1;
      double t = gap(rng);
      while (t <= double(duration_us)) {
        tagged.push_back({Event{Timestamp(t), std::uint16_t(x), std::uint16_t(y), p}, kOriginHotPixel});
        t += gap(rng);
      }
    }
  }

  std::stable_sort(tagged.begin(), tagged.end(), [](const Tagged& a, const Tagged& b) { return a.e.t < b.e.t; });
  out.stream.events.resize(tagged.size());
  out.origin.resize(tagged.size());
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    out.stream.events[i] = tagged[i].e;
    out.origin[i] = tagged[i].origin;
  }
  return out;
}

// ---- flights ----

std::vector<double> command_rpm(const DroneSpec& drone, Command c, int sign) {
  std::vector<double> rpm(drone.rotors.size());
  for (std::size_t i = 0; i < rpm.size(); ++i)
    rpm[i] = drone.hover_rpm + drone.delta_rpm * mixer_sign(c, drone.rotors[i], sign);
  return rpm;
}

namespace {

void validate_drone(const DroneSpec& d) {
  if (d.rotors.empty()) throw ConfigError("drone needs at least one rotor");
  if (!(d.hover_rpm > 0) || d.delta_rpm < 0 || d.delta_rpm >= d.hover_rpm)
    throw ConfigError("drone needs hover_rpm > delta_rpm >= 0");
  if (d.jitter_rpm < 0 || d.motor_tau_s < 0 || d.accel_noise_psd < 0 || d.gps_sigma_m < 0)
    throw ConfigError("drone noise parameters must be nonnegative");
  if (!(d.sample_rate_hz > 0) || !(d.duration_s > 0) || !(d.gps_rate_hz > 0))
    throw ConfigError("drone rates and duration must be positive");
}

}  // namespace

std::vector<ScriptEntry> vertical_script(double duration_s) {
  std::vector<ScriptEntry> s;
  for (double t = 0.0; t < duration_s || s.empty(); t += 10.0) {
    s.push_back({t, Command::climb, 1});
    s.push_back({t + 2.0, Command::hover, 1});
    s.push_back({t + 5.0, Command::descent, 1});
    s.push_back({t + 7.0, Command::hover, 1});
  }
  return s;
}

std::vector<ScriptEntry> spiral_script(double duration_s) {
  std::vector<ScriptEntry> s{{0.0, Command::climb, 1}};
  constexpr std::array<std::pair<Command, int>, 4> loop{
      {{Command::roll, 1}, {Command::pitch, 1}, {Command::roll, -1}, {Command::pitch, -1}}};
  double t = 1.0;
  for (std::size_t i = 0; t < duration_s || s.size() < 2; ++i, t += 2.0)
    s.push_back({t, loop[i % loop.size()].first, loop[i % loop.size()].second});
  return s;
}

std::vector<std::array<double, 2>> rotor_image_centers(const DroneSpec& drone) {
  std::vector<std::array<double, 2>> out(drone.rotors.size());
  const double half = 1.5 * drone.blade_length;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < drone.rotor_image_centers.size()) {
      out[i] = drone.rotor_image_centers[i];
    } else {
      out[i] = {drone.geometry.width / 2.0 + (drone.rotors[i].body_x < 0 ? -half : half),
                drone.geometry.height / 2.0 + (drone.rotors[i].body_y > 0 ? -half : half)};
    }
  }
  return out;
}

SimulatedFlight simulate_flight(const std::vector<ScriptEntry>& script, const DroneSpec& drone,
                                const NoiseSpec& noise, std::uint64_t seed) {
  validate_drone(drone);
  if (script.empty()) throw ConfigError("flight script is empty");
  for (std::size_t i = 1; i < script.size(); ++i)
    if (script[i].t_s < script[i - 1].t_s) throw ConfigError("flight script times must be nondecreasing");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n_rotors = drone.rotors.size();
  const double dt = 1.0 / drone.sample_rate_hz;
  const auto n_steps = static_cast<std::size_t>(std::floor(drone.duration_s * drone.sample_rate_hz + 1e-9));
  const double lag = drone.motor_tau_s > 0 ? 1.0 - std::exp(-dt / drone.motor_tau_s) : 1.0;

  std::vector<double> hover_omega(n_rotors, rpm_to_rad_s(drone.hover_rpm));
  const ThrustModel model = ThrustModel::calibrate(hover_omega, drone.rotors, drone.tilt_fraction);

  SimulatedFlight out;
  out.rpm.assign(n_rotors, {});
  std::vector<double> motor(n_rotors, drone.hover_rpm);
  std::vector<double> omega(n_rotors);
  Vec3 p = drone.initial_position, v{0.0, 0.0, 0.0};
  std::size_t entry = 0;
  const double accel_sigma = std::sqrt(drone.accel_noise_psd / dt);

  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t_s = k * dt;
    const auto t_us = static_cast<Timestamp>(std::llround(t_s * 1e6));
    while (entry + 1 < script.size() && script[entry + 1].t_s <= t_s + 1e-12) ++entry;
    const ScriptEntry& active = script[entry].t_s <= t_s + 1e-12 ? script[entry] : ScriptEntry{};
    const std::vector<double> target = command_rpm(drone, active.command, active.sign);
    for (std::size_t i = 0; i < n_rotors; ++i) {
      motor[i] += (target[i] - motor[i]) * lag;
      const double rpm = std::max(0.0, motor[i] + drone.jitter_rpm * gauss(rng));
      out.rpm[i].push_back(rpm);
      omega[i] = rpm_to_rad_s(rpm);
    }
    out.rpm_t.push_back(t_us);
    out.truth.push_back({t_us, p, v, active.command});

    Vec3 a = model.acceleration(active.command, omega);
    for (int ax = 0; ax < 3; ++ax) {
      a[ax] += accel_sigma * gauss(rng);
      p[ax] += v[ax] * dt + 0.5 * a[ax] * dt * dt;
      v[ax] += a[ax] * dt;
    }
  }

  // GPS fixes on the nearest truth sample.
  const double gps_dt = 1.0 / drone.gps_rate_hz;
  for (double t = 0.0; t <= drone.duration_s + 1e-9; t += gps_dt) {
    const auto k = static_cast<std::size_t>(std::llround(t * drone.sample_rate_hz));
    if (k >= out.truth.size()) break;
    GpsSample g;
    g.t = out.truth[k].t;
    for (int ax = 0; ax < 3; ++ax) g.position[ax] = out.truth[k].position[ax] + drone.gps_sigma_m * gauss(rng);
    out.gps.push_back(g);
  }

  if (drone.render_events) {
    std::vector<PropellerSpec> props(n_rotors);
    const auto centers = rotor_image_centers(drone);
    for (std::size_t i = 0; i < n_rotors; ++i) {
      PropellerSpec& s = props[i];
      s.center_x = centers[i][0];
      s.center_y = centers[i][1];
      s.n_blades = drone.n_blades;
      s.blade_length = drone.blade_length;
      s.blade_width = drone.blade_width;
      s.spin = drone.rotors[i].spin;
      s.initial_phase = 0.3 * double(i);
      std::vector<SpeedProfile::Knot> knots;
      knots.reserve(out.rpm_t.size());
      for (std::size_t k = 0; k < out.rpm_t.size(); ++k) knots.push_back({double(out.rpm_t[k]), out.rpm[i][k]});
      s.speed = SpeedProfile(std::move(knots));
    }
    const Timestamp tick = drone.tick_us ? drone.tick_us : max_tick_for(props);
    out.events = simulate_propellers(props, noise, drone.geometry, out.rpm_t.back(), tick, seed ^ 0x9e3779b97f4a7c15ULL);
  }
  return out;
}

std::vector<CommandSample> generate_command_dataset(const DroneSpec& drone, int samples_per_class,
                                                   int window_samples, std::uint64_t seed) {
  validate_drone(drone);
  if (samples_per_class < 1 || window_samples < 2) throw ConfigError("dataset needs samples and a window");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double dt = 1.0 / drone.sample_rate_hz;
  const double lag = drone.motor_tau_s > 0 ? 1.0 - std::exp(-dt / drone.motor_tau_s) : 1.0;
  const int extra = std::max(1, static_cast<int>(0.2 * drone.sample_rate_hz));
  std::uniform_int_distribution<int> end_dist(window_samples, window_samples + extra);

  std::vector<CommandSample> out;
  out.reserve(kNumCommands * samples_per_class);
  for (Command c : kAllCommands) {
    const std::vector<double> target = command_rpm(drone, c);
    for (int n = 0; n < samples_per_class; ++n) {
      const int end = end_dist(rng);
      CommandSample sample;
      sample.label = c;
      sample.rpm.assign(drone.rotors.size(), {});
      std::vector<double> motor(drone.rotors.size(), drone.hover_rpm);
      for (int k = 0; k < end; ++k) {
        for (std::size_t i = 0; i < motor.size(); ++i) {
          motor[i] += (target[i] - motor[i]) * lag;
          const double rpm = std::max(0.0, motor[i] + drone.jitter_rpm * gauss(rng));
          if (k >= end - window_samples) sample.rpm[i].push_back(rpm);
        }
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace rotorsense
