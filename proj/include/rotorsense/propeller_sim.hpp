#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/event_core.hpp"

namespace rotorsense {

// Piecewise-linear RPM over time. Knots with equal timestamps form a jump;
// the speed is held constant before the first and after the last knot.
class SpeedProfile {
 public:
  struct Knot {
    double t_us = 0.0;
    double rpm = 0.0;
  };

  SpeedProfile() : SpeedProfile(std::vector<Knot>{{0.0, 0.0}}) {}
  explicit SpeedProfile(std::vector<Knot> knots);

  static SpeedProfile constant(double rpm);
  static SpeedProfile step(double rpm_before, double rpm_after, double t_step_us);
  static SpeedProfile ramp(double rpm_from, double rpm_to, double t0_us, double t1_us);

  double rpm_at(double t_us) const;
  // Rotation angle accumulated over [0, t_us], radians.
  double phase_at(double t_us) const;
  double max_rpm() const;
  double min_rpm() const;
  const std::vector<Knot>& knots() const { return knots_; }

 private:
  std::vector<Knot> knots_;
};

struct PropellerSpec {
  double center_x = 0.0;
  double center_y = 0.0;
  int n_blades = 2;
  double blade_length = 60.0;  // px, tip radius
  double blade_width = 8.0;    // px
  double initial_phase = 0.0;  // rad
  // +1: blade angle atan2(y, x) decreases with time (the sense the motion
  // compensator assumes for positive omega), -1: the opposite sense.
  int spin = 1;
  SpeedProfile speed;
};

struct NoiseSpec {
  double background_rate = 0.0;          // events / pixel / s (Poisson)
  double background_on_fraction = 1.0;   // share of background events with p = +1
  int hot_pixel_count = 0;
  double hot_pixel_rate = 0.0;           // events / s per hot pixel
  double vibration_jitter_px = 0.0;      // std of positional jitter on blade events
};

// Origin labels carried alongside simulated events.
inline constexpr std::int16_t kOriginBackground = -1;
inline constexpr std::int16_t kOriginHotPixel = -2;

struct PropellerTruth {
  Timestamp tick_us = 0;
  std::vector<Timestamp> t;               // sample times, one per tick
  std::vector<std::vector<double>> rpm;   // [propeller][sample]

  // Linearly interpolated RPM of one propeller.
  double rpm_at(std::size_t prop, double t_us) const;
};

struct SimulatedStream {
  EventStream stream;
  std::vector<std::int16_t> origin;  // >= 0: propeller index, else kOrigin*
  PropellerTruth truth;
};

// Paints blade-edge events for rotating filled rectangles plus noise. Pixels
// whose coverage flips between ticks emit +1 (newly covered) or -1 (newly
// uncovered) at the tick time. Throws ConfigError if the tip would move more
// than one pixel per tick.
SimulatedStream simulate_propellers(const std::vector<PropellerSpec>& specs, const NoiseSpec& noise,
                                    const SensorGeometry& geometry, Timestamp duration_us, Timestamp tick_us,
                                    std::uint64_t seed);

// Largest tick keeping every blade tip within one pixel of travel per tick.
Timestamp max_tick_for(const std::vector<PropellerSpec>& specs);

// ---- flights ----

struct ScriptEntry {
  double t_s = 0.0;
  Command command = Command::hover;
  int sign = 1;  // -1 mirrors yaw/roll/pitch patterns
};

struct DroneSpec {
  std::vector<RotorLayout> rotors = quad_x_layout();
  double hover_rpm = 3000.0;
  double delta_rpm = 300.0;
  double jitter_rpm = 0.0;        // Gaussian per-sample RPM jitter
  double motor_tau_s = 0.02;      // first-order motor lag
  double tilt_fraction = 0.2;
  double accel_noise_psd = 0.0;   // white acceleration disturbance, m^2/s^3
  double sample_rate_hz = 1000.0;  // integration and RPM trace rate
  double duration_s = 10.0;
  Vec3 initial_position{0.0, 0.0, 10.0};
  double gps_rate_hz = 5.0;
  double gps_sigma_m = 2.0;

  // Event rendering is optional: four rotors at kHz event rates are large.
  bool render_events = false;
  SensorGeometry geometry{640, 480};
  std::vector<std::array<double, 2>> rotor_image_centers;  // defaults to a square around the sensor center
  double blade_length = 40.0;
  double blade_width = 6.0;
  int n_blades = 2;
  Timestamp tick_us = 0;  // 0: derived from peak speed
};

struct FlightSample {
  Timestamp t = 0;
  Vec3 position{};
  Vec3 velocity{};
  Command command = Command::hover;
};

struct GpsSample {
  Timestamp t = 0;
  Vec3 position{};
};

struct SimulatedFlight {
  std::vector<FlightSample> truth;        // at sample_rate_hz
  std::vector<Timestamp> rpm_t;           // trace sample times
  std::vector<std::vector<double>> rpm;   // [rotor][sample]
  std::vector<GpsSample> gps;
  SimulatedStream events;                 // empty unless render_events
};

// Image position of each rotor hub: the configured ones, else a square of
// side 3 * blade_length around the sensor center following the body layout.
std::vector<std::array<double, 2>> rotor_image_centers(const DroneSpec& drone);

SimulatedFlight simulate_flight(const std::vector<ScriptEntry>& script, const DroneSpec& drone,
                                const NoiseSpec& noise, std::uint64_t seed);

// Repeating climb / hover / descent / hover pattern (2 s, 3 s, 2 s, 3 s).
std::vector<ScriptEntry> vertical_script(double duration_s);
// One climb second, then roll, pitch, mirrored roll and mirrored pitch for
// 2 s each, repeated: a square loop while ascending.
std::vector<ScriptEntry> spiral_script(double duration_s);

// RPM of each rotor for a command under the drone's mixer pattern (no jitter).
std::vector<double> command_rpm(const DroneSpec& drone, Command c, int sign = 1);

// Labeled RPM windows for classifier training: each sample switches from hover
// to the labeled command and records `window_samples` trace samples ending a
// random time after the switch.
std::vector<CommandSample> generate_command_dataset(const DroneSpec& drone, int samples_per_class,
                                                   int window_samples, std::uint64_t seed);

}  // namespace rotorsense
