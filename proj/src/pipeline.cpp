#include "rotorsense/pipeline.hpp"

#include <openssl/evp.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "rotorsense/errors.hpp"
#include "rotorsense/metrics.hpp"

namespace rotorsense {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string() + " for checksum");
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

RunRecorder::RunRecorder(fs::path out_dir, const PipelineConfig& config, std::string command)
    : out_dir_(std::move(out_dir)), command_(std::move(command)), seed_(config.seed), config_text_(dump_config(config)) {
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir_.string() + ": " + ec.message());
}

void RunRecorder::metric(json record) { metrics_.push_back(std::move(record)); }

void RunRecorder::artifact(const fs::path& file) {
  if (std::find(artifacts_.begin(), artifacts_.end(), file) == artifacts_.end()) artifacts_.push_back(file);
}

void RunRecorder::note(const std::string& key, json value) { notes_[key] = std::move(value); }

void RunRecorder::finish() {
  {
    std::ofstream cfg(path("config.txt"));
    cfg << config_text_;
    std::ofstream m(path("metrics.jsonl"));
    for (const auto& r : metrics_) m << r.dump() << '\n';
    if (!cfg || !m) throw DataError("cannot write run records to " + out_dir_.string());
  }
  artifact(path("config.txt"));
  artifact(path("metrics.jsonl"));

  json manifest;
  manifest["command"] = command_;
  manifest["seed"] = seed_;
  manifest["config_sha256"] = sha256_hex(config_text_);
  json files = json::array();
  for (const auto& a : artifacts_) {
    json f;
    f["path"] = fs::relative(a, out_dir_).generic_string();
    f["bytes"] = fs::file_size(a);
    f["sha256"] = sha256_file(a);
    files.push_back(std::move(f));
  }
  manifest["artifacts"] = std::move(files);
  for (auto& [k, v] : notes_.items()) manifest[k] = v;
  std::ofstream out(path("manifest.json"));
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("cannot write manifest.json");
}

namespace {

// Rethrows a stage failure with the stage name, keeping the error class.
template <typename F>
auto in_stage(const char* name, F&& body) {
  const std::string prefix = std::string("stage ") + name + ": ";
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const fs::filesystem_error& e) {
    throw DataError(prefix + e.what());
  }
}

json metric(const char* stage, const char* name, json value) {
  json m;
  m["stage"] = stage;
  m["metric"] = name;
  m["value"] = std::move(value);
  return m;
}

std::vector<PropellerSpec> bench_specs(const PipelineConfig& c) {
  std::vector<PropellerSpec> specs;
  for (const auto& p : c.propellers) specs.push_back(p.spec());
  return specs;
}

double interpolate(const std::vector<std::pair<Timestamp, double>>& series, Timestamp t) {
  const auto it = std::lower_bound(series.begin(), series.end(), t,
                                   [](const auto& s, Timestamp v) { return s.first < v; });
  if (it == series.begin()) return series.front().second;
  if (it == series.end()) return series.back().second;
  const auto& [t1, v1] = *it;
  const auto& [t0, v0] = *(it - 1);
  if (t1 == t0) return v1;
  const double a = double(t - t0) / double(t1 - t0);
  return v0 + a * (v1 - v0);
}

}  // namespace

std::vector<RpmTruthRow> truth_rows(std::span<const Timestamp> t, const std::vector<std::vector<double>>& rpm,
                                    double rate_hz) {
  if (!(rate_hz > 0)) throw ConfigError("truth rate must be positive");
  const double step = 1e6 / rate_hz;
  std::vector<RpmTruthRow> rows;
  double next = t.empty() ? 0.0 : double(t.front());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (double(t[k]) + 1e-9 < next) continue;
    for (std::size_t p = 0; p < rpm.size(); ++p) rows.push_back({t[k], int(p), rpm[p][k]});
    while (next <= double(t[k]) + 1e-9) next += step;
  }
  return rows;
}

BenchData simulate_bench(const PipelineConfig& c) {
  BenchData out;
  const auto specs = bench_specs(c);
  out.sim = simulate_propellers(specs, c.noise, c.geometry, c.duration_us, c.tick_us ? c.tick_us : max_tick_for(specs), c.seed);
  out.truth = truth_rows(out.sim.truth.t, out.sim.truth.rpm, c.truth_rate_hz);
  return out;
}

FlightData simulate_flight_for(const PipelineConfig& c) {
  FlightData out;
  out.flight = simulate_flight(flight_script(c), c.drone, c.noise, c.seed);
  out.truth_rpm = truth_rows(out.flight.rpm_t, out.flight.rpm, c.truth_rate_hz);
  return out;
}

Preprocessed preprocess(const EventStream& stream, const FilterParams& filter, bool filter_enabled,
                        const KMeansParams& segment) {
  if (segment.k < 1) throw ConfigError("segment.k must be positive");
  Preprocessed out;
  if (filter_enabled) {
    out.kept = filter_stream(stream.events, stream.geometry, filter);
  } else {
    out.kept.resize(stream.events.size());
    for (std::size_t i = 0; i < out.kept.size(); ++i) out.kept[i] = i;
  }
  std::vector<Event> kept;
  kept.reserve(out.kept.size());
  for (std::size_t i : out.kept) kept.push_back(stream.events[i]);
  out.tracks = segment_propellers(kept, segment, &out.report);
  for (auto& track : out.tracks)
    for (auto& i : track.indices) i = out.kept[i];
  return out;
}

void relabel_tracks(std::vector<PropellerTrack>& tracks, std::span<const std::array<double, 2>> centers) {
  std::vector<int> owner(centers.size(), -1);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = std::hypot(tracks[k].centroid.x - centers[c][0], tracks[k].centroid.y - centers[c][1]);
      if (d < best_d) best_d = d, best = c;
    }
    if (owner[best] >= 0)
      throw DataError("tracks " + std::to_string(owner[best]) + " and " + std::to_string(k) +
                      " both lie nearest propeller " + std::to_string(best));
    owner[best] = int(k);
    tracks[k].prop_id = int(best);
  }
  std::sort(tracks.begin(), tracks.end(), [](const auto& a, const auto& b) { return a.prop_id < b.prop_id; });
}

std::vector<TrackRow> track_rows(std::span<const PropellerTrack> tracks) {
  std::vector<TrackRow> rows;
  for (const auto& t : tracks)
    for (std::size_t i : t.indices) rows.push_back({i, t.prop_id});
  std::sort(rows.begin(), rows.end(), [](const TrackRow& a, const TrackRow& b) { return a.event_index < b.event_index; });
  return rows;
}

std::vector<PropellerTrack> tracks_from_rows(const EventStream& stream, std::span<const TrackRow> rows) {
  std::map<int, PropellerTrack> by_id;
  std::vector<TrackRow> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end(), [](const TrackRow& a, const TrackRow& b) { return a.event_index < b.event_index; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto& r = sorted[k];
    if (r.event_index >= stream.events.size())
      throw DataError("track row " + std::to_string(k + 1) + ": event_index " + std::to_string(r.event_index) +
                      " is past the end of the event file");
    if (k > 0 && sorted[k - 1].event_index == r.event_index)
      throw DataError("event_index " + std::to_string(r.event_index) + " appears in more than one track row");
    auto& t = by_id[r.prop_id];
    t.prop_id = r.prop_id;
    t.indices.push_back(r.event_index);
    t.events.push_back(stream.events[r.event_index]);
  }
  std::vector<PropellerTrack> out;
  for (auto& [id, t] : by_id) {
    double sx = 0, sy = 0;
    for (const auto& e : t.events) sx += e.x, sy += e.y;
    t.member_count = t.events.size();
    t.centroid = {sx / double(t.member_count), sy / double(t.member_count)};
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<SpeedRow> estimate_tracks(std::span<const PropellerTrack> tracks, const TrackingOptions& options,
                                      Timestamp origin, EstimateStats* stats) {
  std::vector<SpeedRow> rows;
  EstimateStats local;
  for (const auto& track : tracks) {
    const auto result = estimate_track(track.events, track.centroid, options, track.prop_id, origin);
    if (result.batches.empty() && !track.events.empty())
      throw NumericalError("track " + std::to_string(track.prop_id) + ": every batch was degenerate, no speed estimate");
    for (const auto& b : result.batches)
      rows.push_back({b.estimate.t_ref, track.prop_id, b.estimate.rpm(), b.estimate.objective_value});
    local.batches += result.batches.size();
    local.skipped += result.skipped;
    local.spin.push_back(result.spin);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SpeedRow& a, const SpeedRow& b) {
    return a.t_ref != b.t_ref ? a.t_ref < b.t_ref : a.prop_id < b.prop_id;
  });
  if (stats) *stats = local;
  return rows;
}

std::vector<CommandSample> command_dataset(const PipelineConfig& c, std::uint64_t seed) {
  DroneSpec drone = c.drone;
  drone.sample_rate_hz = c.classifier.train.features.rate_hz;
  drone.jitter_rpm = c.classifier.train_jitter_fraction * drone.hover_rpm;
  const int window = int(std::lround(c.classifier.window_ms * 1e-3 * drone.sample_rate_hz));
  return generate_command_dataset(drone, c.classifier.samples_per_class, window, seed);
}

CommandModel train_command_model(const PipelineConfig& c) {
  TrainConfig tc = c.classifier.train;
  tc.seed = c.seed;
  return train(command_dataset(c, c.seed), tc);
}

std::vector<CommandEvent> infer_commands(std::span<const SpeedRow> speeds, const CommandModel& model,
                                         double window_ms, double stride_ms) {
  if (!(window_ms > 0) || !(stride_ms > 0)) throw ConfigError("command window and stride must be positive");
  const double rate = model.features.rate_hz;
  const std::size_t n = std::size_t(std::lround(window_ms * 1e-3 * rate));
  if (n != model.window)
    throw ConfigError("window of " + format_number(window_ms) + " ms gives " + std::to_string(n) +
                      " samples but the model expects " + std::to_string(model.window));
  const auto per_prop = split_by_prop(speeds);
  if (per_prop.size() != model.channels)
    throw DataError("speed file has " + std::to_string(per_prop.size()) + " propellers but the model expects " +
                    std::to_string(model.channels));
  std::vector<std::vector<double>> t(per_prop.size()), v(per_prop.size());
  double first = 0.0, last = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < per_prop.size(); ++p) {
    if (per_prop[p].empty()) throw DataError("no speed estimates for prop_id " + std::to_string(p));
    for (const auto& r : per_prop[p]) t[p].push_back(double(r.t_ref)), v[p].push_back(r.rpm);
    first = std::max(first, t[p].front());
    last = std::min(last, t[p].back());
  }
  const double span_us = double(n - 1) * 1e6 / rate;
  const double stride_us = stride_ms * 1e3;
  std::vector<CommandEvent> out;
  CommandSample sample;
  sample.rpm.resize(per_prop.size());
  for (double end = first + span_us; end <= last + 1e-6; end += stride_us) {
    for (std::size_t p = 0; p < per_prop.size(); ++p) sample.rpm[p] = resample_zoh(t[p], v[p], end - span_us, rate, n);
    out.push_back({Timestamp(std::llround(end)), predict(model, sample).command});
  }
  return out;
}

FusionResult fuse(std::span<const SpeedRow> speeds, std::span<const CommandEvent> commands,
                  std::span<const GpsSample> gps, const PipelineConfig& c) {
  const std::size_t n = c.drone.rotors.size();
  const std::vector<double> hover(n, rpm_to_rad_s(c.drone.hover_rpm));
  const ThrustModel model = ThrustModel::calibrate(hover, c.drone.rotors, c.drone.tilt_fraction);
  std::vector<GpsFix> fixes;
  fixes.reserve(gps.size());
  for (const auto& g : gps) fixes.push_back({g.t, {g.position[0], g.position[1], g.position[2]}});
  FusionConfig fc = c.fusion;
  if (fc.gps_sigma_m <= 0) fc.gps_sigma_m = c.drone.gps_sigma_m;
  return run_fusion(joint_speed_samples(speeds, n), commands, fixes, model, fc);
}

std::vector<RmaeEntry> speed_rmae(std::span<const SpeedRow> speeds, std::span<const RpmTruthRow> truth) {
  std::map<int, std::vector<std::pair<Timestamp, double>>> series;
  for (const auto& r : truth) series[r.prop_id].push_back({r.t, r.rpm});
  for (auto& [id, s] : series) std::stable_sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.first < b.first; });
  std::vector<RmaeEntry> out;
  const auto grouped = split_by_prop(speeds);
  for (std::size_t p = 0; p < grouped.size(); ++p) {
    if (grouped[p].empty()) continue;
    const auto it = series.find(int(p));
    if (it == series.end()) throw DataError("no ground truth for prop_id " + std::to_string(p));
    std::vector<double> est, ref;
    for (const auto& r : grouped[p]) {
      est.push_back(r.rpm);
      ref.push_back(interpolate(it->second, r.t_ref));
    }
    out.push_back({int(p), rmae(est, ref), est.size()});
  }
  return out;
}

namespace {

void record_rmae(RunRecorder& rec, std::span<const RmaeEntry> entries) {
  for (const auto& e : entries) {
    json m = metric("eval", "rmae_percent", e.rmae_percent);
    m["prop_id"] = e.prop_id;
    m["n"] = e.n;
    rec.metric(std::move(m));
  }
}

void record_filter(RunRecorder& rec, const Preprocessed& pre, std::span<const std::int16_t> origin) {
  rec.metric(metric("preprocess", "kept_events", pre.kept.size()));
  rec.metric(metric("preprocess", "kmeans_iterations", pre.report.iterations));
  if (origin.empty()) return;
  std::size_t noise = 0, blade = 0, noise_kept = 0, blade_kept = 0;
  for (auto o : origin) (o < 0 ? noise : blade) += 1;
  for (auto i : pre.kept) (origin[i] < 0 ? noise_kept : blade_kept) += 1;
  if (noise) rec.metric(metric("preprocess", "noise_removed_fraction", 1.0 - double(noise_kept) / double(noise)));
  if (blade) rec.metric(metric("preprocess", "blade_removed_fraction", 1.0 - double(blade_kept) / double(blade)));
  std::size_t cross = 0;
  for (const auto& t : pre.tracks)
    for (auto i : t.indices)
      if (origin[i] >= 0 && origin[i] != t.prop_id) ++cross;
  rec.metric(metric("preprocess", "cross_assigned_blade_events", cross));
}

void record_estimate(RunRecorder& rec, const EstimateStats& st) {
  rec.metric(metric("estimate", "batches", st.batches));
  rec.metric(metric("estimate", "skipped_batches", st.skipped));
}

EventStream input_stream(const PipelineConfig& c) { return read_events(c.input_events); }

void run_bench(const PipelineConfig& c, RunRecorder& rec) {
  EventStream stream;
  std::vector<RpmTruthRow> truth;
  std::vector<std::int16_t> origin;
  const bool simulated = c.input_events.empty();
  if (simulated) {
    in_stage("simulate", [&] {
      BenchData data = simulate_bench(c);
      write_events(data.sim.stream.events, data.sim.stream.geometry, rec.path("events.bin"));
      write_rpm_truth(rec.path("truth_rpm.csv"), data.truth);
      rec.artifact(rec.path("events.bin"));
      rec.artifact(rec.path("truth_rpm.csv"));
      stream = std::move(data.sim.stream);
      truth = std::move(data.truth);
      origin = std::move(data.sim.origin);
    });
  } else {
    in_stage("load", [&] {
      stream = input_stream(c);
      if (!c.input_truth_rpm.empty()) truth = read_rpm_truth(c.input_truth_rpm);
    });
  }
  rec.metric(metric("simulate", "events", stream.events.size()));

  const Preprocessed pre = in_stage("preprocess", [&] {
    KMeansParams km = c.segment;
    if (km.k == 0) km.k = int(c.propellers.size());
    Preprocessed p = preprocess(stream, c.filter, c.filter_enabled, km);
    if (simulated && p.tracks.size() == c.propellers.size()) {
      std::vector<std::array<double, 2>> centers;
      for (const auto& prop : c.propellers) centers.push_back({prop.center_x, prop.center_y});
      relabel_tracks(p.tracks, centers);
    }
    std::vector<Event> filtered;
    for (auto i : p.kept) filtered.push_back(stream.events[i]);
    write_events(filtered, stream.geometry, rec.path("filtered.bin"));
    write_tracks(rec.path("tracks.csv"), track_rows(p.tracks));
    rec.artifact(rec.path("filtered.bin"));
    rec.artifact(rec.path("tracks.csv"));
    return p;
  });
  record_filter(rec, pre, origin);

  const auto speeds = in_stage("estimate", [&] {
    EstimateStats st;
    TrackingOptions opt = c.tracking;
    opt.seed = c.seed;
    auto rows = estimate_tracks(pre.tracks, opt, stream.events.empty() ? 0 : stream.events.front().t, &st);
    write_speeds(rec.path("speeds.csv"), rows);
    rec.artifact(rec.path("speeds.csv"));
    record_estimate(rec, st);
    return rows;
  });

  if (!truth.empty()) in_stage("eval", [&] { record_rmae(rec, speed_rmae(speeds, truth)); });
}

std::vector<TimedPosition> positions(std::span<const FusedState> states) {
  std::vector<TimedPosition> out;
  for (const auto& s : states) out.push_back({s.t, {s.mu[0], s.mu[1], s.mu[2]}});
  return out;
}

json cdf_json(const LocalizationError& e) {
  json a = json::array();
  for (double v : e.cdf) a.push_back(v);
  return a;
}

void run_flight(const PipelineConfig& c, RunRecorder& rec) {
  if (!c.input_events.empty()) throw ConfigError("the flight scenario simulates its own input; unset input.events");
  if (!c.drone.render_events) throw ConfigError("the flight scenario needs drone.render_events = true");
  const FlightData data = in_stage("simulate", [&] {
    FlightData d = simulate_flight_for(c);
    write_events(d.flight.events.stream.events, d.flight.events.stream.geometry, rec.path("events.bin"));
    write_rpm_truth(rec.path("truth_rpm.csv"), d.truth_rpm);
    write_flight_truth(rec.path("truth_flight.csv"), d.flight.truth);
    write_gps(rec.path("gps.csv"), d.flight.gps);
    for (const char* f : {"events.bin", "truth_rpm.csv", "truth_flight.csv", "gps.csv"}) rec.artifact(rec.path(f));
    return d;
  });
  const EventStream& stream = data.flight.events.stream;
  rec.metric(metric("simulate", "events", stream.events.size()));

  const Preprocessed pre = in_stage("preprocess", [&] {
    KMeansParams km = c.segment;
    if (km.k == 0) km.k = int(c.drone.rotors.size());
    Preprocessed p = preprocess(stream, c.filter, c.filter_enabled, km);
    if (p.tracks.size() != c.drone.rotors.size())
      throw DataError("found " + std::to_string(p.tracks.size()) + " tracks for " +
                      std::to_string(c.drone.rotors.size()) + " rotors");
    relabel_tracks(p.tracks, rotor_image_centers(c.drone));
    std::vector<Event> filtered;
    for (auto i : p.kept) filtered.push_back(stream.events[i]);
    write_events(filtered, stream.geometry, rec.path("filtered.bin"));
    write_tracks(rec.path("tracks.csv"), track_rows(p.tracks));
    rec.artifact(rec.path("filtered.bin"));
    rec.artifact(rec.path("tracks.csv"));
    return p;
  });
  record_filter(rec, pre, data.flight.events.origin);

  const auto speeds = in_stage("estimate", [&] {
    EstimateStats st;
    TrackingOptions opt = c.tracking;
    opt.seed = c.seed;
    auto rows = estimate_tracks(pre.tracks, opt, stream.events.empty() ? 0 : stream.events.front().t, &st);
    write_speeds(rec.path("speeds.csv"), rows);
    rec.artifact(rec.path("speeds.csv"));
    record_estimate(rec, st);
    return rows;
  });
  in_stage("eval", [&] { record_rmae(rec, speed_rmae(speeds, data.truth_rpm)); });

  const auto commands = in_stage("infer-command", [&] {
    const CommandModel model =
        c.classifier.model_path.empty() ? train_command_model(c) : read_model(fs::path(c.classifier.model_path));
    write_model(model, rec.path("model.txt"));
    rec.artifact(rec.path("model.txt"));
    double cv = 0.0;
    for (double a : model.fold_accuracy) cv += a;
    if (!model.fold_accuracy.empty())
      rec.metric(metric("infer-command", "cv_accuracy", cv / double(model.fold_accuracy.size())));
    auto out = infer_commands(speeds, model, c.classifier.window_ms, c.classifier.stride_ms);
    write_commands(rec.path("commands.csv"), out);
    rec.artifact(rec.path("commands.csv"));
    std::size_t hits = 0;
    const auto& truth = data.flight.truth;
    for (const auto& e : out) {
      auto it = std::lower_bound(truth.begin(), truth.end(), e.t,
                                 [](const FlightSample& s, Timestamp t) { return s.t < t; });
      if (it == truth.end()) --it;
      hits += it->command == e.command;
    }
    if (!out.empty()) rec.metric(metric("infer-command", "flight_accuracy", double(hits) / double(out.size())));
    return out;
  });

  in_stage("fuse", [&] {
    const FusionResult res = fuse(speeds, commands, data.flight.gps, c);
    write_fused(rec.path("fused.csv"), res.states);
    rec.artifact(rec.path("fused.csv"));
    double nis = 0.0;
    for (double v : res.nis) nis += v;
    const auto [lo, hi] = nis_bounds(res.nis.size(), 3);
    json m = metric("fuse", "nis_sum", nis);
    m["lo"] = lo;
    m["hi"] = hi;
    m["updates"] = res.nis.size();
    rec.metric(std::move(m));
    rec.metric(metric("fuse", "dropped_inputs", res.dropped));

    std::vector<TimedPosition> truth, gps;
    for (const auto& s : data.flight.truth) truth.push_back({s.t, s.position});
    for (const auto& g : data.flight.gps) gps.push_back({g.t, g.position});
    const Timestamp tol = c.align_tolerance_us;
    const auto fused_err = localization_error(positions(res.states), truth, tol);
    const auto gps_err = localization_error(gps, truth, tol);
    json f = metric("eval", "fused_error_m", fused_err.mean);
    f["pairs"] = fused_err.pairs;
    f["cdf"] = cdf_json(fused_err);
    rec.metric(std::move(f));
    json g = metric("eval", "gps_error_m", gps_err.mean);
    g["pairs"] = gps_err.pairs;
    g["cdf"] = cdf_json(gps_err);
    rec.metric(std::move(g));
    rec.metric(metric("eval", "fused_to_gps_ratio", fused_err.mean / gps_err.mean));
  });
}

}  // namespace

void run_pipeline(const PipelineConfig& config, const fs::path& out_dir) {
  validate(config);
  RunRecorder rec(out_dir, config, "pipeline");
  try {
    if (config.scenario == Scenario::bench) run_bench(config, rec);
    else run_flight(config, rec);
  } catch (...) {
    // Keep whatever the finished stages wrote.
    try {
      rec.finish();
    } catch (...) {
    }
    throw;
  }
  rec.finish();
}

ThroughputResult measure_throughput(const PipelineConfig& config, int repeats) {
  validate(config);
  const BenchData data = simulate_bench(config);
  KMeansParams km = config.segment;
  if (km.k == 0) km.k = int(config.propellers.size());
  const Preprocessed pre = preprocess(data.sim.stream, config.filter, config.filter_enabled, km);
  TrackingOptions opt = config.tracking;
  opt.seed = config.seed;
  opt.estimator.execution = Execution::serial;
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  ThroughputResult best;
  for (const auto& t : pre.tracks) best.events += t.events.size();
  best.seconds = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = estimate_tracks(pre.tracks, opt, data.sim.stream.events.front().t);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rows.empty()) throw NumericalError("throughput run produced no estimates");
    best.seconds = std::min(best.seconds, s);
  }
  omp_set_num_threads(threads);
  best.events_per_s = double(best.events) / best.seconds;
  return best;
}

}  // namespace rotorsense
