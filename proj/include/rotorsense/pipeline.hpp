#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rotorsense/config.hpp"
#include "rotorsense/io.hpp"

namespace rotorsense {

// Collects JSON-lines metrics and the artifacts a run wrote, then writes
// metrics.jsonl and manifest.json (config hash, seed, SHA-256 per artifact).
class RunRecorder {
 public:
  RunRecorder(std::filesystem::path out_dir, const PipelineConfig& config, std::string command);

  const std::filesystem::path& out_dir() const { return out_dir_; }
  std::filesystem::path path(const std::string& name) const { return out_dir_ / name; }

  void metric(nlohmann::ordered_json record);
  void artifact(const std::filesystem::path& file);
  // Extra manifest fields, e.g. benchmark results.
  void note(const std::string& key, nlohmann::ordered_json value);
  const std::vector<nlohmann::ordered_json>& metrics() const { return metrics_; }

  void finish();

 private:
  std::filesystem::path out_dir_;
  std::string command_;
  std::uint64_t seed_;
  std::string config_text_;
  std::vector<nlohmann::ordered_json> metrics_;
  std::vector<std::filesystem::path> artifacts_;
  nlohmann::ordered_json notes_ = nlohmann::ordered_json::object();
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---- stages ----

struct BenchData {
  SimulatedStream sim;
  std::vector<RpmTruthRow> truth;  // at truth_rate_hz
};
BenchData simulate_bench(const PipelineConfig& config);

struct FlightData {
  SimulatedFlight flight;
  std::vector<RpmTruthRow> truth_rpm;  // at truth_rate_hz
};
FlightData simulate_flight_for(const PipelineConfig& config);

// Truth rows resampled to `rate_hz` from per-propeller traces sampled at `t`.
std::vector<RpmTruthRow> truth_rows(std::span<const Timestamp> t, const std::vector<std::vector<double>>& rpm,
                                    double rate_hz);

struct Preprocessed {
  std::vector<std::size_t> kept;     // input indices surviving the noise filter
  std::vector<PropellerTrack> tracks;  // track.indices refer to the input stream
  KMeansReport report;
};

// Noise filter (when enabled) then k-means. `k` must be positive.
Preprocessed preprocess(const EventStream& stream, const FilterParams& filter, bool filter_enabled,
                        const KMeansParams& segment);

// Renumbers tracks so prop_id is the index of the nearest known center.
// Throws DataError when two tracks claim the same center.
void relabel_tracks(std::vector<PropellerTrack>& tracks, std::span<const std::array<double, 2>> centers);

std::vector<TrackRow> track_rows(std::span<const PropellerTrack> tracks);
// Rebuilds tracks from a track file; each centroid is its members' mean.
std::vector<PropellerTrack> tracks_from_rows(const EventStream& stream, std::span<const TrackRow> rows);

struct EstimateStats {
  std::size_t batches = 0;
  std::size_t skipped = 0;
  std::vector<int> spin;  // per track
};
std::vector<SpeedRow> estimate_tracks(std::span<const PropellerTrack> tracks, const TrackingOptions& options,
                                      Timestamp origin, EstimateStats* stats = nullptr);

// Simulated training set for the configured drone and classifier window.
std::vector<CommandSample> command_dataset(const PipelineConfig& config, std::uint64_t seed);
CommandModel train_command_model(const PipelineConfig& config);

// Slides a window over the joint rotor speeds (held between estimates) and
// classifies it every `stride_ms`. Each output is stamped at its window end.
std::vector<CommandEvent> infer_commands(std::span<const SpeedRow> speeds, const CommandModel& model,
                                         double window_ms, double stride_ms);

FusionResult fuse(std::span<const SpeedRow> speeds, std::span<const CommandEvent> commands,
                  std::span<const GpsSample> gps, const PipelineConfig& config);

// RMAE per prop_id of estimates against truth interpolated at each t_ref.
struct RmaeEntry {
  int prop_id = 0;
  double rmae_percent = 0.0;
  std::size_t n = 0;
};
std::vector<RmaeEntry> speed_rmae(std::span<const SpeedRow> speeds, std::span<const RpmTruthRow> truth);

// ---- runs ----

// Runs every stage for the configured scenario, writing artifacts and
// metrics into `out_dir`. A stage failure is rethrown with the stage name.
void run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

struct ThroughputResult {
  std::size_t events = 0;
  double seconds = 0.0;
  double events_per_s = 0.0;
};
// Times the estimate stage on the configured bench stream, single-threaded
// and serial, best of `repeats`.
ThroughputResult measure_throughput(const PipelineConfig& config, int repeats = 3);

}  // namespace rotorsense
