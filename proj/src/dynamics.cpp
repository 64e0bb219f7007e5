#include "rotorsense/dynamics.hpp"

#include "rotorsense/errors.hpp"

namespace rotorsense {

std::string_view command_name(Command c) {
  switch (c) {
    case Command::hover: return "hover";
    case Command::climb: return "climb";
    case Command::descent: return "descent";
    case Command::yaw: return "yaw";
    case Command::roll: return "roll";
    case Command::pitch: return "pitch";
  }
  return "unknown";
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : kAllCommands)
    if (command_name(c) == name) return c;
  return std::nullopt;
}

std::vector<RotorLayout> quad_x_layout(double arm) {
  const double a = arm / 1.4142135623730951;
  return {{-a, a, 1}, {a, a, -1}, {a, -a, 1}, {-a, -a, -1}};
}

int mixer_sign(Command c, const RotorLayout& rotor, int command_sign) {
  const int s = command_sign >= 0 ? 1 : -1;
  switch (c) {
    case Command::hover: return 0;
    case Command::climb: return 1;
    case Command::descent: return -1;
    case Command::yaw: return s * (rotor.spin > 0 ? 1 : -1);
    case Command::roll: return s * (rotor.body_x < 0 ? 1 : -1);
    case Command::pitch: return s * (rotor.body_y < 0 ? 1 : -1);
  }
  return 0;
}

ThrustModel ThrustModel::calibrate(std::span<const double> hover_omega_rad_s, std::vector<RotorLayout> rotors,
                                   double tilt_fraction) {
  if (hover_omega_rad_s.size() != rotors.size())
    throw ConfigError("hover speed count does not match rotor count");
  double sum_sq = 0.0;
  for (double w : hover_omega_rad_s) sum_sq += w * w;
  if (!(sum_sq > 0.0)) throw ConfigError("hover rotor speeds must be positive to calibrate thrust");
  ThrustModel m;
  m.hover_sum_sq = sum_sq;
  m.thrust_per_mass = kGravity / sum_sq;
  m.tilt_fraction = tilt_fraction;
  m.rotors = std::move(rotors);
  return m;
}

Vec3 ThrustModel::acceleration(Command c, std::span<const double> omega) const {
  if (omega.size() != rotors.size()) throw ConfigError("rotor speed count does not match the thrust model");
  Vec3 a{0.0, 0.0, 0.0};
  switch (c) {
    case Command::hover:
    case Command::yaw:
      break;
    case Command::climb:
    case Command::descent: {
      double sum_sq = 0.0;
      for (double w : omega) sum_sq += w * w;
      a[2] = thrust_per_mass * (sum_sq - hover_sum_sq);
      break;
    }
    case Command::roll:
    case Command::pitch: {
      double diff = 0.0;
      for (std::size_t i = 0; i < omega.size(); ++i) {
        const double side = c == Command::roll ? -rotors[i].body_x : -rotors[i].body_y;
        if (side > 0) diff += omega[i] * omega[i];
        if (side < 0) diff -= omega[i] * omega[i];
      }
      a[c == Command::roll ? 0 : 1] = tilt_fraction * thrust_per_mass * diff;
      break;
    }
  }
  return a;
}

}  // namespace rotorsense
