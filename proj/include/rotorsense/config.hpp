#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rotorsense/command_infer.hpp"
#include "rotorsense/preprocess.hpp"
#include "rotorsense/propeller_sim.hpp"
#include "rotorsense/state_fusion.hpp"
#include "rotorsense/tracking.hpp"

namespace rotorsense {

enum class Scenario { bench, flight };

struct PropellerConfig {
  double center_x = 320.0;
  double center_y = 240.0;
  int blades = 2;
  double length = 60.0;
  double width = 8.0;
  double phase = 0.0;
  int spin = 1;
  std::vector<SpeedProfile::Knot> profile{{0.0, 3000.0}};

  PropellerSpec spec() const;
};

struct ClassifierConfig {
  std::string model_path;       // empty: train on a simulated dataset
  int samples_per_class = 200;
  double window_ms = 100.0;
  double stride_ms = 10.0;
  double train_jitter_fraction = 0.02;  // of hover RPM
  TrainConfig train;
};

// Every stage's settings. Text form: one `key = value` per line, '#'
// comments, unknown keys rejected. See `dump_config` for the full key list.
struct PipelineConfig {
  std::uint64_t seed = 1;
  Scenario scenario = Scenario::bench;
  std::string input_events;     // run on this file instead of simulating
  std::string input_truth_rpm;  // optional truth sidecar for input_events

  SensorGeometry geometry{640, 480};
  Timestamp duration_us = 1'000'000;
  Timestamp tick_us = 0;  // 0: largest valid tick
  double truth_rate_hz = 1000.0;
  std::vector<PropellerConfig> propellers{PropellerConfig{}};
  NoiseSpec noise;

  std::string flight_script = "vertical";  // vertical, spiral or custom
  std::vector<ScriptEntry> script;         // used when flight_script = custom
  DroneSpec drone = default_drone();

  bool filter_enabled = true;
  FilterParams filter;
  KMeansParams segment{0, 100, 1e-3, 0};  // k = 0: one per simulated propeller
  TrackingOptions tracking;

  ClassifierConfig classifier;
  FusionConfig fusion;  // gps_sigma_m = 0: use the drone's
  Timestamp align_tolerance_us = 500;

  static DroneSpec default_drone();
};

PipelineConfig parse_config(std::istream& in, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
// Applies one `key = value` assignment.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

// Checks every section; throws ConfigError naming the offending key.
void validate(const PipelineConfig& config);

// Canonical text of every key in a fixed order; parse_config reads it back.
std::string dump_config(const PipelineConfig& config);

std::vector<ScriptEntry> flight_script(const PipelineConfig& config);
EstimatorConfig estimator_for(const PipelineConfig& config);

}  // namespace rotorsense
