#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rotorsense {

enum class Command { hover = 0, climb, descent, yaw, roll, pitch };

inline constexpr std::size_t kNumCommands = 6;
inline constexpr std::array<Command, kNumCommands> kAllCommands = {
    Command::hover, Command::climb, Command::descent, Command::yaw, Command::roll, Command::pitch};
inline constexpr double kGravity = 9.80665;

std::string_view command_name(Command c);
std::optional<Command> parse_command(std::string_view name);

inline double rpm_to_rad_s(double rpm) { return rpm * 0.10471975511965977; }  // 2*pi/60
inline double rad_s_to_rpm(double w) { return w * 9.549296585513721; }

using Vec3 = std::array<double, 3>;

// Rotor placement in the body frame (+x right, +y forward) and spin sense
// (+1 clockwise, -1 counter-clockwise seen from above).
struct RotorLayout {
  double body_x = 0.0;
  double body_y = 0.0;
  int spin = 1;
};

// Standard X quadrotor: front-left CW, front-right CCW, rear-right CW, rear-left CCW.
std::vector<RotorLayout> quad_x_layout(double arm = 0.15);

// Mixer sign (-1, 0, +1) applied to rotor speed offsets for a command. A
// negative command sign mirrors roll, pitch and yaw patterns.
int mixer_sign(Command c, const RotorLayout& rotor, int command_sign = 1);

// Uniformly sampled RPM traces of every rotor with the command in force.
struct CommandSample {
  std::vector<std::vector<double>> rpm;  // [rotor][sample]
  Command label = Command::hover;
};

// Point-mass acceleration model scaled by thrust ~ k_f * omega^2. Shared by the
// flight simulator (truth) and the fusion predictor.
struct ThrustModel {
  double thrust_per_mass = 0.0;  // k_f / m, m/s^2 per (rad/s)^2
  double hover_sum_sq = 0.0;     // sum_i omega_i^2 at hover, (rad/s)^2
  double tilt_fraction = 0.2;
  std::vector<RotorLayout> rotors;

  // Solves k_f * sum(omega_hover^2) = m * g for k_f / m.
  static ThrustModel calibrate(std::span<const double> hover_omega_rad_s, std::vector<RotorLayout> rotors,
                               double tilt_fraction = 0.2);

  // Linear acceleration in the world frame (+z up) for a command and rotor
  // speeds in rad/s: climb/descent act on z from the collective thrust excess,
  // roll/pitch act on x/y from the left-right / back-front thrust differential
  // scaled by the tilt fraction, hover and yaw give zero.
  Vec3 acceleration(Command c, std::span<const double> omega_rad_s) const;
};

}  // namespace rotorsense
