#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/event_core.hpp"

namespace rotorsense {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

// Position (m) and velocity (m/s) belief.
struct FusedState {
  Timestamp t = 0;
  Vector6 mu = Vector6::Zero();
  Matrix6 sigma = Matrix6::Identity();
};

struct MotionPrior {
  Command command = Command::hover;
  std::vector<double> omega_rad_s;  // one per rotor
  double process_noise = 1.0;       // white acceleration PSD, m^2/s^3
};

// Constant-acceleration propagation with the thrust model's acceleration for
// the prior. Q is the white-noise-acceleration covariance scaled by the
// prior's process noise. Throws ConfigError for dt <= 0 and DataError for
// non-finite inputs.
FusedState predict(const FusedState& state, const MotionPrior& prior, double dt_s, const ThrustModel& model);

struct UpdateResult {
  FusedState state;
  Eigen::Vector3d innovation = Eigen::Vector3d::Zero();
  double nis = 0.0;  // innovation' S^-1 innovation
};

// GPS position update with H = [I 0] and the Joseph-form covariance.
UpdateResult update(const FusedState& state, const Eigen::Vector3d& gps, const Eigen::Matrix3d& r_gps);

// Throws NumericalError unless sigma is finite with eigenvalues >= -1e-9,
// then symmetrizes it.
void check_covariance(Matrix6& sigma);

struct SpeedSample {
  Timestamp t = 0;
  std::vector<double> rpm;  // one per rotor
};
struct CommandEvent {
  Timestamp t = 0;
  Command command = Command::hover;
};
struct GpsFix {
  Timestamp t = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct FusionConfig {
  double process_noise = 0.05;      // m^2/s^3
  double gps_sigma_m = 2.0;
  double initial_velocity_sigma = 1.0;
  Timestamp reorder_tolerance_us = 0;  // later-than-this out-of-order inputs are dropped
  bool use_priors = true;           // false: zero-acceleration prior (GPS smoothing only)
};

struct FusionResult {
  std::vector<FusedState> states;  // one after every processed input
  std::vector<double> nis;         // one per GPS update
  std::size_t dropped = 0;         // out-of-order inputs skipped
};

// Merges the three streams by time. Each input predicts the state to its time
// with the prior in force, then applies itself: speed and command inputs
// replace the prior, GPS fixes update the belief. Starts at the first GPS fix
// (earlier inputs only set the prior). Empty GPS stream gives an empty result.
FusionResult run_fusion(std::span<const SpeedSample> speeds, std::span<const CommandEvent> commands,
                        std::span<const GpsFix> gps, const ThrustModel& model, const FusionConfig& config);

// Two-sided chi-square bounds for the sum of `n` NIS values of dimension
// `dof` at the given confidence.
std::pair<double, double> nis_bounds(std::size_t n, int dof, double confidence = 0.95);

}  // namespace rotorsense
