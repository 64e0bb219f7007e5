#include "rotorsense/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rotorsense/errors.hpp"
#include "rotorsense/io.hpp"

namespace rotorsense {

PropellerSpec PropellerConfig::spec() const {
  PropellerSpec s;
  s.center_x = center_x;
  s.center_y = center_y;
  s.n_blades = blades;
  s.blade_length = length;
  s.blade_width = width;
  s.initial_phase = phase;
  s.spin = spin;
  s.speed = SpeedProfile(profile);
  return s;
}

DroneSpec PipelineConfig::default_drone() {
  DroneSpec d;
  d.render_events = true;
  d.duration_s = 4.0;
  d.jitter_rpm = 0.0;
  return d;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("config key '" + key + "': cannot use '" + value + "' (" + want + ")");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out))
    bad(key, v, "expected a number");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad(key, v, "expected an integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad(key, v, "expected a nonnegative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected true or false");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::pair<double, double> to_pair(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != 2) bad(key, v, "expected two comma-separated numbers");
  return {to_double(key, parts[0]), to_double(key, parts[1])};
}

std::string num(double v) { return format_number(v); }
std::string pair_str(double a, double b) { return num(a) + "," + num(b); }
std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Key {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Acc>
Key dbl(Acc acc) {
  return {[acc](PipelineConfig& c, const std::string& k, const std::string& v) { acc(c) = to_double(k, v); },
          [acc](const PipelineConfig& c) { return num(acc(const_cast<PipelineConfig&>(c))); }};
}
template <typename Acc>
Key integer(Acc acc) {
  return {[acc](PipelineConfig& c, const std::string& k, const std::string& v) {
            using T = std::remove_reference_t<decltype(acc(c))>;
            const long long x = to_int(k, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (x < 0) bad(k, v, "expected a nonnegative integer");
            }
            if (x < static_cast<long long>(std::numeric_limits<int>::min()) && !std::is_same_v<T, long long>)
              bad(k, v, "out of range");
            acc(c) = static_cast<T>(x);
          },
          [acc](const PipelineConfig& c) { return std::to_string(acc(const_cast<PipelineConfig&>(c))); }};
}
template <typename Acc>
Key boolean(Acc acc) {
  return {[acc](PipelineConfig& c, const std::string& k, const std::string& v) { acc(c) = to_bool(k, v); },
          [acc](const PipelineConfig& c) { return bool_str(acc(const_cast<PipelineConfig&>(c))); }};
}
template <typename Acc>
Key text(Acc acc) {
  return {[acc](PipelineConfig& c, const std::string&, const std::string& v) { acc(c) = v; },
          [acc](const PipelineConfig& c) { return acc(const_cast<PipelineConfig&>(c)); }};
}

std::string spin_str(const PipelineConfig& c) {
  return c.tracking.auto_spin ? "auto" : std::to_string(c.tracking.estimator.spin);
}

const std::vector<std::pair<std::string, Key>>& keys() {
  using C = PipelineConfig;
  static const std::vector<std::pair<std::string, Key>> table = {
      {"seed", {[](C& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
                [](const C& c) { return std::to_string(c.seed); }}},
      {"scenario", {[](C& c, const std::string& k, const std::string& v) {
                      if (v == "bench") c.scenario = Scenario::bench;
                      else if (v == "flight") c.scenario = Scenario::flight;
                      else bad(k, v, "expected bench or flight");
                    },
                    [](const C& c) { return std::string(c.scenario == Scenario::bench ? "bench" : "flight"); }}},
      {"input.events", text([](C& c) -> std::string& { return c.input_events; })},
      {"input.truth_rpm", text([](C& c) -> std::string& { return c.input_truth_rpm; })},
      {"sensor.width", integer([](C& c) -> int& { return c.geometry.width; })},
      {"sensor.height", integer([](C& c) -> int& { return c.geometry.height; })},
      {"sim.duration_us", integer([](C& c) -> Timestamp& { return c.duration_us; })},
      {"sim.tick_us", integer([](C& c) -> Timestamp& { return c.tick_us; })},
      {"sim.truth_rate_hz", dbl([](C& c) -> double& { return c.truth_rate_hz; })},
      {"noise.background_rate", dbl([](C& c) -> double& { return c.noise.background_rate; })},
      {"noise.on_fraction", dbl([](C& c) -> double& { return c.noise.background_on_fraction; })},
      {"noise.hot_pixels", integer([](C& c) -> int& { return c.noise.hot_pixel_count; })},
      {"noise.hot_pixel_rate", dbl([](C& c) -> double& { return c.noise.hot_pixel_rate; })},
      {"noise.jitter_px", dbl([](C& c) -> double& { return c.noise.vibration_jitter_px; })},
      {"flight.script", text([](C& c) -> std::string& { return c.flight_script; })},
      {"drone.hover_rpm", dbl([](C& c) -> double& { return c.drone.hover_rpm; })},
      {"drone.delta_rpm", dbl([](C& c) -> double& { return c.drone.delta_rpm; })},
      {"drone.jitter_rpm", dbl([](C& c) -> double& { return c.drone.jitter_rpm; })},
      {"drone.motor_tau_s", dbl([](C& c) -> double& { return c.drone.motor_tau_s; })},
      {"drone.tilt", dbl([](C& c) -> double& { return c.drone.tilt_fraction; })},
      {"drone.accel_noise_psd", dbl([](C& c) -> double& { return c.drone.accel_noise_psd; })},
      {"drone.sample_rate_hz", dbl([](C& c) -> double& { return c.drone.sample_rate_hz; })},
      {"drone.duration_s", dbl([](C& c) -> double& { return c.drone.duration_s; })},
      {"drone.gps_rate_hz", dbl([](C& c) -> double& { return c.drone.gps_rate_hz; })},
      {"drone.gps_sigma_m", dbl([](C& c) -> double& { return c.drone.gps_sigma_m; })},
      {"drone.render_events", boolean([](C& c) -> bool& { return c.drone.render_events; })},
      {"drone.blade_length", dbl([](C& c) -> double& { return c.drone.blade_length; })},
      {"drone.blade_width", dbl([](C& c) -> double& { return c.drone.blade_width; })},
      {"drone.blades", integer([](C& c) -> int& { return c.drone.n_blades; })},
      {"filter.enabled", boolean([](C& c) -> bool& { return c.filter_enabled; })},
      {"filter.window_us", integer([](C& c) -> Timestamp& { return c.filter.window_us; })},
      {"filter.bin", integer([](C& c) -> int& { return c.filter.bin_size; })},
      {"filter.count_ratio", dbl([](C& c) -> double& { return c.filter.count_ratio; })},
      {"filter.polarity_band",
       {[](C& c, const std::string& k, const std::string& v) {
          std::tie(c.filter.polarity_lo, c.filter.polarity_hi) = to_pair(k, v);
        },
        [](const C& c) { return pair_str(c.filter.polarity_lo, c.filter.polarity_hi); }}},
      {"segment.k", integer([](C& c) -> int& { return c.segment.k; })},
      {"segment.max_iters", integer([](C& c) -> int& { return c.segment.max_iters; })},
      {"segment.tol", dbl([](C& c) -> double& { return c.segment.tol; })},
      {"batch.dt_us", integer([](C& c) -> Timestamp& { return c.tracking.policy.dt_us; })},
      {"batch.delta", dbl([](C& c) -> double& { return c.tracking.policy.delta; })},
      {"batch.beta", integer([](C& c) -> int& { return c.tracking.policy.beta; })},
      {"batch.sample_fraction", dbl([](C& c) -> double& { return c.tracking.policy.sample_fraction; })},
      {"batch.radius_px", dbl([](C& c) -> double& { return c.tracking.policy.radius_px; })},
      {"batch.st_ratio", dbl([](C& c) -> double& { return c.tracking.policy.st_ratio_us; })},
      {"batch.consistency", {[](C& c, const std::string& k, const std::string& v) {
                               if (v == "log") c.tracking.policy.scale = ConsistencyScale::log;
                               else if (v == "raw") c.tracking.policy.scale = ConsistencyScale::raw;
                               else bad(k, v, "expected log or raw");
                             },
                             [](const C& c) {
                               return std::string(c.tracking.policy.scale == ConsistencyScale::log ? "log" : "raw");
                             }}},
      {"batch.target_rotation_rad", dbl([](C& c) -> double& { return c.tracking.target_rotation_rad; })},
      {"estimate.bracket_rpm",
       {[](C& c, const std::string& k, const std::string& v) {
          std::tie(c.tracking.estimator.bracket_lo_rpm, c.tracking.estimator.bracket_hi_rpm) = to_pair(k, v);
        },
        [](const C& c) { return pair_str(c.tracking.estimator.bracket_lo_rpm, c.tracking.estimator.bracket_hi_rpm); }}},
      {"estimate.grid", integer([](C& c) -> int& { return c.tracking.estimator.grid; })},
      {"estimate.tol_rpm", dbl([](C& c) -> double& { return c.tracking.estimator.tol_rpm; })},
      {"estimate.epsilon", dbl([](C& c) -> double& { return c.tracking.estimator.objective.epsilon; })},
      {"estimate.h_max", integer([](C& c) -> std::uint32_t& { return c.tracking.estimator.objective.h_max; })},
      {"estimate.min_prominence", dbl([](C& c) -> double& { return c.tracking.estimator.min_prominence; })},
      {"estimate.prior_span", dbl([](C& c) -> double& { return c.tracking.prior_span; })},
      {"estimate.spin", {[](C& c, const std::string& k, const std::string& v) {
                           if (v == "auto") {
                             c.tracking.auto_spin = true;
                           } else if (v == "1" || v == "+1" || v == "-1") {
                             c.tracking.auto_spin = false;
                             c.tracking.estimator.spin = v == "-1" ? -1 : 1;
                           } else {
                             bad(k, v, "expected auto, 1 or -1");
                           }
                         },
                         spin_str}},
      {"estimate.parallel", {[](C& c, const std::string& k, const std::string& v) {
                               c.tracking.estimator.execution = to_bool(k, v) ? Execution::parallel : Execution::serial;
                             },
                             [](const C& c) { return bool_str(c.tracking.estimator.execution == Execution::parallel); }}},
      {"classifier.model", text([](C& c) -> std::string& { return c.classifier.model_path; })},
      {"classifier.samples_per_class", integer([](C& c) -> int& { return c.classifier.samples_per_class; })},
      {"classifier.window_ms", dbl([](C& c) -> double& { return c.classifier.window_ms; })},
      {"classifier.stride_ms", dbl([](C& c) -> double& { return c.classifier.stride_ms; })},
      {"classifier.train_jitter_fraction", dbl([](C& c) -> double& { return c.classifier.train_jitter_fraction; })},
      {"classifier.folds", integer([](C& c) -> int& { return c.classifier.train.folds; })},
      {"classifier.lambda", dbl([](C& c) -> double& { return c.classifier.train.lambda; })},
      {"classifier.epochs", integer([](C& c) -> int& { return c.classifier.train.epochs; })},
      {"classifier.cutoff_hz", dbl([](C& c) -> double& { return c.classifier.train.features.cutoff_hz; })},
      {"classifier.rate_hz", dbl([](C& c) -> double& { return c.classifier.train.features.rate_hz; })},
      {"fusion.process_noise", dbl([](C& c) -> double& { return c.fusion.process_noise; })},
      {"fusion.gps_sigma_m", dbl([](C& c) -> double& { return c.fusion.gps_sigma_m; })},
      {"fusion.initial_velocity_sigma", dbl([](C& c) -> double& { return c.fusion.initial_velocity_sigma; })},
      {"fusion.reorder_tolerance_us", integer([](C& c) -> Timestamp& { return c.fusion.reorder_tolerance_us; })},
      {"fusion.use_priors", boolean([](C& c) -> bool& { return c.fusion.use_priors; })},
      {"eval.align_tolerance_us", integer([](C& c) -> Timestamp& { return c.align_tolerance_us; })},
  };
  return table;
}

// "prop.N.field", "script.N", "drone.rotor_center.N"
bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty() || s.size() > 4) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<SpeedProfile::Knot> parse_profile(const std::string& key, const std::string& v) {
  // "t_us:rpm;t_us:rpm;..." or a bare RPM for a constant speed
  std::vector<SpeedProfile::Knot> knots;
  if (v.find(':') == std::string::npos) return {{0.0, to_double(key, v)}};
  for (const auto& part : split(v, ';')) {
    const auto tv = split(part, ':');
    if (tv.size() != 2) bad(key, v, "expected t_us:rpm pairs separated by ';'");
    knots.push_back({to_double(key, tv[0]), to_double(key, tv[1])});
  }
  return knots;
}

std::string profile_str(const std::vector<SpeedProfile::Knot>& knots) {
  std::string s;
  for (const auto& k : knots) s += (s.empty() ? "" : ";") + num(k.t_us) + ":" + num(k.rpm);
  return s;
}

bool set_indexed(PipelineConfig& c, const std::string& key, const std::string& v) {
  const auto parts = split(key, '.');
  std::size_t i = 0;
  if (parts.size() == 3 && parts[0] == "prop" && parse_index(parts[1], i)) {
    if (i >= c.propellers.size()) c.propellers.resize(i + 1);
    PropellerConfig& p = c.propellers[i];
    const std::string& f = parts[2];
    if (f == "center") std::tie(p.center_x, p.center_y) = to_pair(key, v);
    else if (f == "blades") p.blades = static_cast<int>(to_int(key, v));
    else if (f == "length") p.length = to_double(key, v);
    else if (f == "width") p.width = to_double(key, v);
    else if (f == "phase") p.phase = to_double(key, v);
    else if (f == "spin") p.spin = static_cast<int>(to_int(key, v));
    else if (f == "rpm" || f == "profile") p.profile = parse_profile(key, v);
    else return false;
    return true;
  }
  if (parts.size() == 2 && parts[0] == "script" && parse_index(parts[1], i)) {
    const auto f = split(v, ',');
    if (f.size() != 2 && f.size() != 3) bad(key, v, "expected t_s,command[,sign]");
    const auto cmd = parse_command(f[1]);
    if (!cmd) bad(key, v, "unknown command '" + f[1] + "'");
    const int sign = f.size() == 3 ? static_cast<int>(to_int(key, f[2])) : 1;
    if (sign != 1 && sign != -1) bad(key, v, "sign must be 1 or -1");
    if (i >= c.script.size()) c.script.resize(i + 1);
    c.script[i] = {to_double(key, f[0]), *cmd, sign};
    return true;
  }
  if (parts.size() == 3 && parts[0] == "drone" && parts[1] == "rotor_center" && parse_index(parts[2], i)) {
    if (i >= c.drone.rotor_image_centers.size()) c.drone.rotor_image_centers.resize(i + 1);
    const auto xy = to_pair(key, v);
    c.drone.rotor_image_centers[i] = {xy.first, xy.second};
    return true;
  }
  return false;
}

}  // namespace

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [name, k] : keys())
    if (name == key) {
      k.set(c, key, value);
      return;
    }
  if (!set_indexed(c, key, value)) throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig parse_config(std::istream& in, PipelineConfig c) {
  std::string line;
  std::size_t line_no = 0;
  bool props_reset = false;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' repeats line " +
                        std::to_string(it->second));
    // Listed propellers replace the default one.
    if (key.rfind("prop.", 0) == 0 && !props_reset) {
      c.propellers.clear();
      props_reset = true;
    }
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

void validate(const PipelineConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  need(c.geometry.width > 0 && c.geometry.height > 0 && c.geometry.width <= 65535 && c.geometry.height <= 65535,
       "sensor.width/height must be in 1..65535");
  need(c.duration_us > 0, "sim.duration_us must be positive");
  need(c.truth_rate_hz > 0, "sim.truth_rate_hz must be positive");
  need(!c.propellers.empty(), "at least one propeller is required");
  for (std::size_t i = 0; i < c.propellers.size(); ++i) {
    const auto& p = c.propellers[i];
    const std::string at = "prop." + std::to_string(i);
    need(p.blades >= 1, at + ".blades must be >= 1");
    need(p.length > p.width && p.width > 0, at + ": length > width > 0 required");
    need(p.spin == 1 || p.spin == -1, at + ".spin must be 1 or -1");
    need(!p.profile.empty(), at + ".rpm is empty");
    for (const auto& k : p.profile) need(k.t_us >= 0 && k.rpm >= 0, at + ".profile needs t >= 0 and rpm >= 0");
  }
  need(c.noise.background_rate >= 0 && c.noise.hot_pixel_count >= 0 && c.noise.hot_pixel_rate >= 0 &&
           c.noise.vibration_jitter_px >= 0,
       "noise rates must be nonnegative");
  need(c.noise.background_on_fraction >= 0 && c.noise.background_on_fraction <= 1, "noise.on_fraction must be in [0, 1]");
  need(c.flight_script == "vertical" || c.flight_script == "spiral" || c.flight_script == "custom",
       "flight.script must be vertical, spiral or custom");
  need(c.flight_script != "custom" || !c.script.empty(), "flight.script = custom needs script.N entries");
  need(c.drone.hover_rpm > 0 && c.drone.delta_rpm >= 0 && c.drone.delta_rpm < c.drone.hover_rpm,
       "drone needs hover_rpm > delta_rpm >= 0");
  need(c.drone.duration_s > 0 && c.drone.sample_rate_hz > 0 && c.drone.gps_rate_hz > 0,
       "drone rates and duration must be positive");
  need(c.drone.gps_sigma_m >= 0 && c.drone.jitter_rpm >= 0 && c.drone.accel_noise_psd >= 0 && c.drone.motor_tau_s >= 0,
       "drone noise parameters must be nonnegative");
  need(c.drone.blade_length > c.drone.blade_width && c.drone.blade_width > 0 && c.drone.n_blades >= 1,
       "drone blades need length > width > 0");
  try {
    validate(c.filter);
    validate(c.tracking.policy);
    validate(c.tracking.estimator);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  need(c.segment.k >= 0 && c.segment.max_iters >= 1 && c.segment.tol > 0, "segment settings out of range");
  need(c.tracking.prior_span > 0 && c.tracking.prior_span < 1, "estimate.prior_span must be in (0, 1)");
  need(c.tracking.target_rotation_rad >= 0, "batch.target_rotation_rad must be nonnegative");
  const auto& cl = c.classifier;
  need(cl.samples_per_class >= cl.train.folds && cl.train.folds >= 2, "classifier needs folds >= 2 and enough samples");
  need(cl.window_ms > 0 && cl.stride_ms > 0, "classifier window and stride must be positive");
  need(cl.train.lambda > 0 && cl.train.epochs >= 1, "classifier lambda and epochs must be positive");
  need(cl.train.features.rate_hz > 0 && cl.train.features.cutoff_hz > 0 &&
           cl.train.features.cutoff_hz <= cl.train.features.rate_hz / 2,
       "classifier cutoff must be in (0, rate/2]");
  need(cl.train_jitter_fraction >= 0, "classifier.train_jitter_fraction must be nonnegative");
  need(c.fusion.process_noise >= 0 && c.fusion.gps_sigma_m >= 0 && c.fusion.initial_velocity_sigma > 0,
       "fusion noise settings out of range");
}

std::string dump_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& [name, k] : keys()) out += name + " = " + k.get(c) + "\n";
  for (std::size_t i = 0; i < c.propellers.size(); ++i) {
    const auto& p = c.propellers[i];
    const std::string at = "prop." + std::to_string(i) + ".";
    out += at + "center = " + pair_str(p.center_x, p.center_y) + "\n";
    out += at + "blades = " + std::to_string(p.blades) + "\n";
    out += at + "length = " + num(p.length) + "\n";
    out += at + "width = " + num(p.width) + "\n";
    out += at + "phase = " + num(p.phase) + "\n";
    out += at + "spin = " + std::to_string(p.spin) + "\n";
    out += at + "profile = " + profile_str(p.profile) + "\n";
  }
  for (std::size_t i = 0; i < c.script.size(); ++i)
    out += "script." + std::to_string(i) + " = " + num(c.script[i].t_s) + "," +
           std::string(command_name(c.script[i].command)) + "," + std::to_string(c.script[i].sign) + "\n";
  for (std::size_t i = 0; i < c.drone.rotor_image_centers.size(); ++i)
    out += "drone.rotor_center." + std::to_string(i) + " = " +
           pair_str(c.drone.rotor_image_centers[i][0], c.drone.rotor_image_centers[i][1]) + "\n";
  return out;
}

std::vector<ScriptEntry> flight_script(const PipelineConfig& c) {
  if (c.flight_script == "vertical") return vertical_script(c.drone.duration_s);
  if (c.flight_script == "spiral") return spiral_script(c.drone.duration_s);
  if (c.flight_script == "custom") return c.script;
  throw ConfigError("unknown flight script '" + c.flight_script + "'");
}

EstimatorConfig estimator_for(const PipelineConfig& c) { return c.tracking.estimator; }

}  // namespace rotorsense
