// rotorsense command line: one subcommand per pipeline stage plus `pipeline`
// and `bench`. Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rotorsense/config.hpp"
#include "rotorsense/errors.hpp"
#include "rotorsense/io.hpp"
#include "rotorsense/metrics.hpp"
#include "rotorsense/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rotorsense;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> sets;
};

// Flags that override one config key each; applied after the config file.
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values_[key], help + " (" + key + ")");
  }
  void apply(PipelineConfig& c) const {
    for (const auto& [key, value] : values_)
      if (!value.empty()) set_config_value(c, key, value);
  }

 private:
  std::map<std::string, std::string> values_;
};

PipelineConfig load(const Globals& g, const Overrides& o) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
  }
  o.apply(c);
  if (g.seed) c.seed = *g.seed;
  validate(c);
  return c;
}

int k_for(const PipelineConfig& c) {
  if (c.segment.k > 0) return c.segment.k;
  return c.scenario == Scenario::flight ? int(c.drone.rotors.size()) : int(c.propellers.size());
}

void cmd_simulate(const PipelineConfig& c, const fs::path& out, const std::string& format) {
  RunRecorder rec(out, c, "simulate");
  const fs::path events = rec.path(format == "csv" ? "events.csv" : "events.bin");
  const EventFormat fmt = format == "csv" ? EventFormat::csv : EventFormat::bin;
  if (c.scenario == Scenario::bench) {
    const BenchData d = simulate_bench(c);
    write_events(d.sim.stream.events, d.sim.stream.geometry, events, fmt);
    write_rpm_truth(rec.path("truth_rpm.csv"), d.truth);
    rec.artifact(events);
    rec.artifact(rec.path("truth_rpm.csv"));
    rec.metric({{"stage", "simulate"}, {"metric", "events"}, {"value", d.sim.stream.events.size()}});
  } else {
    const FlightData d = simulate_flight_for(c);
    if (c.drone.render_events) {
      write_events(d.flight.events.stream.events, d.flight.events.stream.geometry, events, fmt);
      rec.artifact(events);
    }
    write_rpm_truth(rec.path("truth_rpm.csv"), d.truth_rpm);
    write_flight_truth(rec.path("truth_flight.csv"), d.flight.truth);
    write_gps(rec.path("gps.csv"), d.flight.gps);
    for (const char* f : {"truth_rpm.csv", "truth_flight.csv", "gps.csv"}) rec.artifact(rec.path(f));
    rec.metric({{"stage", "simulate"}, {"metric", "events"}, {"value", d.flight.events.stream.events.size()}});
  }
  rec.finish();
}

void cmd_preprocess(const PipelineConfig& c, const fs::path& out, const std::string& in) {
  RunRecorder rec(out, c, "preprocess");
  const EventStream stream = read_events(in);
  KMeansParams km = c.segment;
  km.k = k_for(c);
  const Preprocessed pre = preprocess(stream, c.filter, c.filter_enabled, km);
  std::vector<Event> kept;
  for (auto i : pre.kept) kept.push_back(stream.events[i]);
  write_events(kept, stream.geometry, rec.path("filtered.bin"));
  write_tracks(rec.path("tracks.csv"), track_rows(pre.tracks));
  rec.artifact(rec.path("filtered.bin"));
  rec.artifact(rec.path("tracks.csv"));
  rec.metric({{"stage", "preprocess"}, {"metric", "kept_events"}, {"value", pre.kept.size()}});
  for (const auto& t : pre.tracks)
    rec.metric({{"stage", "preprocess"},
                {"metric", "centroid"},
                {"value", json::array({t.centroid.x, t.centroid.y})},
                {"prop_id", t.prop_id},
                {"members", t.member_count}});
  rec.finish();
}

void cmd_estimate(const PipelineConfig& c, const fs::path& out, const std::string& in, const std::string& tracks_path) {
  RunRecorder rec(out, c, "estimate");
  const EventStream stream = read_events(in);
  if (stream.events.empty()) throw DataError("event file " + in + " holds no events");
  std::vector<PropellerTrack> tracks;
  if (tracks_path.empty()) {
    std::vector<TrackRow> rows(stream.events.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {i, 0};
    tracks = tracks_from_rows(stream, rows);
  } else {
    tracks = tracks_from_rows(stream, read_tracks(tracks_path));
  }
  TrackingOptions opt = c.tracking;
  opt.seed = c.seed;
  EstimateStats st;
  const auto rows = estimate_tracks(tracks, opt, stream.events.front().t, &st);
  write_speeds(rec.path("speeds.csv"), rows);
  rec.artifact(rec.path("speeds.csv"));
  rec.metric({{"stage", "estimate"}, {"metric", "batches"}, {"value", st.batches}});
  rec.metric({{"stage", "estimate"}, {"metric", "skipped_batches"}, {"value", st.skipped}});
  rec.finish();
}

void cmd_infer(const PipelineConfig& c, const fs::path& out, const std::string& in, const std::string& model_path) {
  RunRecorder rec(out, c, "infer-command");
  const CommandModel model = model_path.empty() ? train_command_model(c) : read_model(fs::path(model_path));
  if (model_path.empty()) {
    write_model(model, rec.path("model.txt"));
    rec.artifact(rec.path("model.txt"));
    double cv = 0.0;
    for (double a : model.fold_accuracy) cv += a;
    rec.metric({{"stage", "infer-command"},
                {"metric", "cv_accuracy"},
                {"value", cv / double(std::max<std::size_t>(1, model.fold_accuracy.size()))}});
  }
  if (!in.empty()) {
    const auto events = infer_commands(read_speeds(in), model, c.classifier.window_ms, c.classifier.stride_ms);
    write_commands(rec.path("commands.csv"), events);
    rec.artifact(rec.path("commands.csv"));
    rec.metric({{"stage", "infer-command"}, {"metric", "windows"}, {"value", events.size()}});
  }
  rec.finish();
}

void cmd_fuse(const PipelineConfig& c, const fs::path& out, const std::string& speeds, const std::string& commands,
              const std::string& gps) {
  RunRecorder rec(out, c, "fuse");
  const FusionResult res = fuse(read_speeds(speeds), read_commands(commands), read_gps(gps), c);
  write_fused(rec.path("fused.csv"), res.states);
  rec.artifact(rec.path("fused.csv"));
  double nis = 0.0;
  for (double v : res.nis) nis += v;
  const auto [lo, hi] = nis_bounds(res.nis.size(), 3);
  rec.metric({{"stage", "fuse"}, {"metric", "nis_sum"}, {"value", nis}, {"lo", lo}, {"hi", hi}, {"updates", res.nis.size()}});
  rec.metric({{"stage", "fuse"}, {"metric", "dropped_inputs"}, {"value", res.dropped}});
  rec.finish();
}

json cdf(const LocalizationError& e) {
  json a = json::array();
  for (double v : e.cdf) a.push_back(v);
  return a;
}

void cmd_eval(const PipelineConfig& c, const fs::path& out, const std::string& speeds, const std::string& truth_rpm,
              const std::string& fused, const std::string& truth_flight, const std::string& gps) {
  if ((speeds.empty() != truth_rpm.empty()) || (fused.empty() != truth_flight.empty()))
    throw ConfigError("eval needs --speeds with --truth-rpm and --fused with --truth-flight");
  if (speeds.empty() && fused.empty()) throw ConfigError("eval needs something to score");
  RunRecorder rec(out, c, "eval");
  if (!speeds.empty()) {
    for (const auto& e : speed_rmae(read_speeds(speeds), read_rpm_truth(truth_rpm))) {
      rec.metric({{"stage", "eval"}, {"metric", "rmae_percent"}, {"value", e.rmae_percent}, {"prop_id", e.prop_id}, {"n", e.n}});
      std::printf("prop %d  RMAE %.4f%%  (%zu estimates)\n", e.prop_id, e.rmae_percent, e.n);
    }
  }
  if (!fused.empty()) {
    std::vector<TimedPosition> truth, est;
    for (const auto& s : read_flight_truth(truth_flight)) truth.push_back({s.t, s.position});
    for (const auto& f : read_fused(fused)) est.push_back({f.t, f.position});
    const auto err = localization_error(est, truth, c.align_tolerance_us);
    rec.metric({{"stage", "eval"}, {"metric", "fused_error_m"}, {"value", err.mean}, {"pairs", err.pairs}, {"cdf", cdf(err)}});
    std::printf("fused mean 3D error %.4f m over %zu pairs\n", err.mean, err.pairs);
    if (!gps.empty()) {
      std::vector<TimedPosition> g;
      for (const auto& s : read_gps(gps)) g.push_back({s.t, s.position});
      const auto ge = localization_error(g, truth, c.align_tolerance_us);
      rec.metric({{"stage", "eval"}, {"metric", "gps_error_m"}, {"value", ge.mean}, {"pairs", ge.pairs}, {"cdf", cdf(ge)}});
      rec.metric({{"stage", "eval"}, {"metric", "fused_to_gps_ratio"}, {"value", err.mean / ge.mean}});
      std::printf("raw GPS mean 3D error %.4f m, ratio %.3f\n", ge.mean, err.mean / ge.mean);
    }
  }
  rec.finish();
}

int cmd_bench(const PipelineConfig& c, const fs::path& out, int repeats, double threshold) {
  RunRecorder rec(out, c, "bench");
  const ThroughputResult r = measure_throughput(c, repeats);
  const bool pass = r.events_per_s >= threshold;
  rec.note("throughput", {{"events", r.events},
                          {"seconds", r.seconds},
                          {"events_per_s", r.events_per_s},
                          {"threshold_events_per_s", threshold},
                          {"threads", 1},
                          {"pass", pass}});
  rec.finish();
  std::printf("estimate stage: %zu events in %.4f s = %.3g events/s (threshold %.3g) %s\n", r.events, r.seconds,
              r.events_per_s, threshold, pass ? "PASS" : "FAIL");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propeller speed, flight command and state estimation from event streams"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--set", g.sets, "extra key=value config assignments");
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "render a synthetic event stream and its ground truth");
  std::string format = "bin";
  o.add(sim, "--scenario", "scenario", "bench or flight");
  sim->add_option("--format", format, "event file format")->check(CLI::IsMember({"bin", "csv"}));
  o.add(sim, "--duration-us", "sim.duration_us", "bench stream length");

  auto* pre = app.add_subcommand("preprocess", "filter noise and segment propellers");
  std::string pre_in;
  pre->add_option("--in", pre_in, "event file")->required();
  o.add(pre, "--window-us", "filter.window_us", "heatmap window");
  o.add(pre, "--bin", "filter.bin", "heatmap bin size in px");
  o.add(pre, "--k", "segment.k", "number of propellers");
  o.add(pre, "--count-ratio", "filter.count_ratio", "count threshold as a share of the mean nonzero bin");
  o.add(pre, "--polarity-band", "filter.polarity_band", "kept positive-fraction band lo,hi");
  o.add(pre, "--filter", "filter.enabled", "apply the noise filter");

  auto* est = app.add_subcommand("estimate", "estimate propeller speeds per track");
  std::string est_in, est_tracks;
  est->add_option("--in", est_in, "event file")->required();
  est->add_option("--tracks", est_tracks, "track file from preprocess; its indices refer to the unfiltered input (default: one track)");
  o.add(est, "--bracket-rpm", "estimate.bracket_rpm", "initial search bracket lo,hi");
  o.add(est, "--grid", "estimate.grid", "grid points per search");
  o.add(est, "--tol", "estimate.tol_rpm", "refinement tolerance in RPM");
  o.add(est, "--epsilon", "estimate.epsilon", "sparsity term epsilon");
  o.add(est, "--spin", "estimate.spin", "auto, 1 or -1");
  o.add(est, "--parallel", "estimate.parallel", "OpenMP grid evaluation");
  o.add(est, "--dt-us", "batch.dt_us", "bundle length");
  o.add(est, "--delta", "batch.delta", "consistency threshold");
  o.add(est, "--beta", "batch.beta", "bundle limit");
  o.add(est, "--sample-fraction", "batch.sample_fraction", "density downsampling fraction");
  o.add(est, "--st-ratio", "batch.st_ratio", "microseconds per pixel in the density metric");

  auto* inf = app.add_subcommand("infer-command", "classify flight commands from speed estimates");
  std::string inf_in, inf_model;
  inf->add_option("--in", inf_in, "speed CSV from estimate");
  inf->add_option("--model", inf_model, "model file (default: train one and save model.txt)");
  o.add(inf, "--window-ms", "classifier.window_ms", "classification window");
  o.add(inf, "--stride-ms", "classifier.stride_ms", "classification stride");

  auto* fu = app.add_subcommand("fuse", "fuse speed and command priors with GPS");
  std::string fu_speeds, fu_commands, fu_gps;
  fu->add_option("--speeds", fu_speeds, "speed CSV")->required();
  fu->add_option("--commands", fu_commands, "command CSV")->required();
  fu->add_option("--gps", fu_gps, "GPS CSV t,x,y,z")->required();
  o.add(fu, "--process-noise", "fusion.process_noise", "acceleration PSD");
  o.add(fu, "--gps-sigma", "fusion.gps_sigma_m", "GPS standard deviation in m");
  o.add(fu, "--reorder-tolerance-us", "fusion.reorder_tolerance_us", "late input tolerance");

  auto* ev = app.add_subcommand("eval", "score speeds (RMAE) and fused tracks (localization error)");
  std::string ev_speeds, ev_truth_rpm, ev_fused, ev_truth_flight, ev_gps;
  ev->add_option("--speeds", ev_speeds, "speed CSV");
  ev->add_option("--truth-rpm", ev_truth_rpm, "t,prop_id,rpm truth");
  ev->add_option("--fused", ev_fused, "fused CSV");
  ev->add_option("--truth-flight", ev_truth_flight, "flight truth CSV");
  ev->add_option("--gps", ev_gps, "raw GPS CSV for the baseline");

  auto* pipe = app.add_subcommand("pipeline", "run every stage for the configured scenario");
  o.add(pipe, "--scenario", "scenario", "bench or flight");

  auto* bench = app.add_subcommand("bench", "single-threaded throughput of the estimate stage");
  int repeats = 3;
  double threshold = 1e6;
  bench->add_option("--repeats", repeats, "timed runs, best kept")->capture_default_str();
  bench->add_option("--min-events-per-s", threshold, "pass threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const PipelineConfig c = load(g, o);
    const fs::path out = g.out;
    if (sim->parsed()) cmd_simulate(c, out, format);
    else if (pre->parsed()) cmd_preprocess(c, out, pre_in);
    else if (est->parsed()) cmd_estimate(c, out, est_in, est_tracks);
    else if (inf->parsed()) cmd_infer(c, out, inf_in, inf_model);
    else if (fu->parsed()) cmd_fuse(c, out, fu_speeds, fu_commands, fu_gps);
    else if (ev->parsed()) cmd_eval(c, out, ev_speeds, ev_truth_rpm, ev_fused, ev_truth_flight, ev_gps);
    else if (pipe->parsed()) run_pipeline(c, out);
    else if (bench->parsed()) return cmd_bench(c, out, repeats, threshold);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
