#include "rotorsense/command_infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "rotorsense/errors.hpp"

namespace rotorsense {

std::vector<double> lowpass(std::span<const double> trace, double cutoff_hz, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz > rate_hz / 2.0)
    throw ConfigError("low-pass cutoff must be in (0, " + std::to_string(rate_hz / 2.0) + "] Hz");
  std::vector<double> y(trace.begin(), trace.end());
  if (y.empty()) return y;
  const double a = 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_hz / rate_hz);
  for (std::size_t i = 1; i < y.size(); ++i) y[i] = y[i - 1] + a * (y[i] - y[i - 1]);
  for (std::size_t i = y.size() - 1; i-- > 0;) y[i] = y[i + 1] + a * (y[i] - y[i + 1]);
  return y;
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / double(len);
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * double(k));
        const std::complex<double> u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
  }
}

std::vector<double> resample_zoh(std::span<const double> t_us, std::span<const double> values, double t_start_us,
                                 double rate_hz, std::size_t n) {
  if (t_us.size() != values.size()) throw DataError("time and value arrays differ in length");
  if (t_us.empty()) throw DataError("cannot resample an empty trace");
  if (!(rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  std::vector<double> out(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t_start_us + double(i) * 1e6 / rate_hz;
    while (j + 1 < t_us.size() && t_us[j + 1] <= t) ++j;
    out[i] = values[j];
  }
  return out;
}

std::array<double, kFeaturesPerChannel> channel_features(std::span<const double> x, double rate_hz) {
  std::array<double, kFeaturesPerChannel> f{};
  if (x.empty()) return f;
  const double n = double(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0, power = 0.0;
  for (double v : x) {
    var += (v - mean) * (v - mean);
    power += v * v;
  }
  f[0] = mean;
  f[1] = std::sqrt(var / n);

  std::size_t m = 1;
  while (m < x.size()) m <<= 1;
  std::vector<std::complex<double>> spec(m, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) spec[i] = x[i] - mean;
  fft(spec);
  double energy = 0.0, peak = 0.0;
  std::size_t peak_bin = 0;
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double e = std::norm(spec[k]);
    energy += e;
    if (e > peak) {
      peak = e;
      peak_bin = k;
    }
  }
  // Rounding residue of a constant trace is far below this.
  const double floor = 1e-20 * power * double(m);
  if (!(energy > floor)) return f;
  double entropy = 0.0;
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double p = std::norm(spec[k]) / energy;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  f[2] = double(peak_bin) * rate_hz / double(m);
  f[3] = energy;
  f[4] = entropy;
  return f;
}

std::vector<double> extract_features(const CommandSample& sample, const FeatureConfig& config) {
  std::vector<double> out;
  out.reserve(sample.rpm.size() * kFeaturesPerChannel);
  for (const auto& ch : sample.rpm) {
    std::vector<double> sq = lowpass(ch, config.cutoff_hz, config.rate_hz);
    for (double& v : sq) {
      const double w = rpm_to_rad_s(v);
      v = w * w;
    }
    const auto f = channel_features(sq, config.rate_hz);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::vector<int> stratified_folds(std::span<const Command> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  std::vector<int> fold(labels.size(), -1);
  std::mt19937_64 rng(seed);
  for (Command c : kAllCommands) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < idx.size(); ++j) fold[idx[j]] = static_cast<int>(j % std::size_t(k));
  }
  return fold;
}

namespace {

void check_dataset(std::span<const CommandSample> samples, int k) {
  if (samples.empty()) throw DataError("training set is empty");
  std::array<int, kNumCommands> per_class{};
  for (const auto& s : samples) {
    if (s.rpm.empty() || s.rpm.size() != samples[0].rpm.size()) throw DataError("samples differ in channel count");
    for (const auto& ch : s.rpm)
      if (ch.size() != samples[0].rpm[0].size()) throw DataError("samples differ in window length");
    ++per_class[static_cast<std::size_t>(s.label)];
  }
  std::string missing;
  for (Command c : kAllCommands)
    if (per_class[static_cast<std::size_t>(c)] < k) missing += std::string(missing.empty() ? "" : ", ") +
                                                               std::string(command_name(c));
  if (!missing.empty())
    throw DataError("classes missing or with fewer than " + std::to_string(k) + " samples: " + missing);
}

struct Standardizer {
  std::vector<double> mean, std;

  static Standardizer fit(const std::vector<std::vector<double>>& rows) {
    const std::size_t d = rows.front().size();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    for (auto& m : s.mean) m /= double(rows.size());
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.std[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (auto& v : s.std) {
      v = std::sqrt(v / double(rows.size()));
      if (!(v > 0.0)) v = 1.0;
    }
    return s;
  }
  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / std[j];
    return z;
  }
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Prediction score(const LinearOvR& m, std::span<const double> z) {
  Prediction p;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < kNumCommands; ++c) {
    p.scores[c] = dot(m.weights[c], z) + m.bias[c];
    if (p.scores[c] > best) {
      best = p.scores[c];
      p.command = kAllCommands[c];
    }
  }
  return p;
}

}  // namespace

LinearOvR fit_ovr(const std::vector<std::vector<double>>& rows, std::span<const Command> labels,
                  const TrainConfig& config) {
  if (!(config.lambda > 0.0)) throw ConfigError("regularization must be positive");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (rows.empty() || rows.size() != labels.size()) throw DataError("feature rows and labels differ");
  const std::size_t d = rows.front().size();
  LinearOvR m;
  for (std::size_t c = 0; c < kNumCommands; ++c) {
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::uint64_t t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (config.lambda * double(t + 1));
        const double y = labels[i] == kAllCommands[c] ? 1.0 : -1.0;
        const double margin = y * (dot(w, rows[i]) + b);
        for (auto& v : w) v *= 1.0 - eta * config.lambda;
        if (margin < 1.0) {
          for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * rows[i][j];
          b += eta * y * config.lambda;
        }
      }
    }
    m.weights[c] = std::move(w);
    m.bias[c] = b;
  }
  return m;
}

CommandModel train(std::span<const CommandSample> samples, const TrainConfig& config) {
  check_dataset(samples, config.folds);
  std::vector<std::vector<double>> features;
  std::vector<Command> labels;
  features.reserve(samples.size());
  for (const auto& s : samples) {
    features.push_back(extract_features(s, config.features));
    labels.push_back(s.label);
  }

  CommandModel model;
  const std::vector<int> fold = stratified_folds(labels, config.folds, config.seed);
  for (int k = 0; k < config.folds; ++k) {
    std::vector<std::vector<double>> train_rows;
    std::vector<Command> train_labels;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (fold[i] != k) {
        train_rows.push_back(features[i]);
        train_labels.push_back(labels[i]);
      }
    const Standardizer st = Standardizer::fit(train_rows);
    for (auto& r : train_rows) r = st.apply(r);
    const LinearOvR m = fit_ovr(train_rows, train_labels, config);
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (fold[i] == k) {
        ++total;
        correct += score(m, st.apply(features[i])).command == labels[i];
      }
    model.fold_accuracy.push_back(double(correct) / double(total));
  }

  const Standardizer st = Standardizer::fit(features);
  std::vector<std::vector<double>> rows;
  rows.reserve(features.size());
  for (const auto& f : features) rows.push_back(st.apply(f));
  const LinearOvR m = fit_ovr(rows, labels, config);
  model.channels = samples[0].rpm.size();
  model.window = samples[0].rpm[0].size();
  model.features = config.features;
  model.feature_mean = st.mean;
  model.feature_std = st.std;
  model.weights = m.weights;
  model.bias = m.bias;
  return model;
}

Prediction predict_features(const CommandModel& model, std::span<const double> features) {
  if (features.size() != model.dimension())
    throw DataError("feature dimension " + std::to_string(features.size()) + " does not match the model's " +
                    std::to_string(model.dimension()));
  const Standardizer st{model.feature_mean, model.feature_std};
  return score(LinearOvR{model.weights, model.bias}, st.apply(features));
}

Prediction predict(const CommandModel& model, const CommandSample& sample) {
  if (sample.rpm.size() != model.channels)
    throw DataError("sample has " + std::to_string(sample.rpm.size()) + " channels, model expects " +
                    std::to_string(model.channels));
  for (const auto& ch : sample.rpm)
    if (ch.size() != model.window)
      throw DataError("sample window " + std::to_string(ch.size()) + " does not match the model's " +
                      std::to_string(model.window));
  return predict_features(model, extract_features(sample, model.features));
}

double accuracy(const CommandModel& model, std::span<const CommandSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : samples) ok += predict(model, s).command == s.label;
  return double(ok) / double(samples.size());
}

// ---- model file ----
//
//   rotorsense-command-model 1
//   channels <n>
//   window <samples>
//   rate_hz <r>
//   cutoff_hz <c>
//   dimension <d>
//   mean <d values>
//   std <d values>
//   class <name> <bias> <d weights>      (six lines, fixed class order)
//   folds <k> <k accuracies>

namespace {

void put(std::ostream& out, double v) { out << ' ' << std::setprecision(17) << v; }

std::istringstream expect_line(std::istream& in, const std::string& key, int& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("model file: missing '" + key + "' line");
  ++line_no;
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key)
    throw ParseError("model file line " + std::to_string(line_no) + ": expected '" + key + "', got '" + k + "'");
  return ls;
}

std::vector<double> read_values(std::istringstream& ls, std::size_t n, const std::string& key, int line_no) {
  std::vector<double> v(n);
  for (auto& x : v)
    if (!(ls >> x)) throw ParseError("model file line " + std::to_string(line_no) + ": short '" + key + "' row");
  std::string extra;
  if (ls >> extra) throw ParseError("model file line " + std::to_string(line_no) + ": trailing data");
  return v;
}

}  // namespace

void write_model(const CommandModel& m, std::ostream& out) {
  out << "rotorsense-command-model " << CommandModel::kVersion << '\n';
  out << "channels " << m.channels << '\n';
  out << "window " << m.window << '\n';
  out << "rate_hz";
  put(out, m.features.rate_hz);
  out << "\ncutoff_hz";
  put(out, m.features.cutoff_hz);
  out << "\ndimension " << m.dimension() << "\nmean";
  for (double v : m.feature_mean) put(out, v);
  out << "\nstd";
  for (double v : m.feature_std) put(out, v);
  out << '\n';
  for (std::size_t c = 0; c < kNumCommands; ++c) {
    out << "class " << command_name(kAllCommands[c]);
    put(out, m.bias[c]);
    for (double v : m.weights[c]) put(out, v);
    out << '\n';
  }
  out << "folds " << m.fold_accuracy.size();
  for (double v : m.fold_accuracy) put(out, v);
  out << '\n';
}

void write_model(const CommandModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file " + path.string());
  write_model(model, out);
  if (!out) throw DataError("failed writing model file " + path.string());
}

CommandModel read_model(std::istream& in) {
  int line_no = 0;
  CommandModel m;
  {
    auto ls = expect_line(in, "rotorsense-command-model", line_no);
    int version = 0;
    if (!(ls >> version) || version != CommandModel::kVersion)
      throw ParseError("model file: unsupported version (expected " + std::to_string(CommandModel::kVersion) + ")");
  }
  {
    auto ls = expect_line(in, "channels", line_no);
    if (!(ls >> m.channels) || m.channels == 0) throw ParseError("model file: bad channel count");
  }
  {
    auto ls = expect_line(in, "window", line_no);
    if (!(ls >> m.window) || m.window < 2) throw ParseError("model file: bad window");
  }
  {
    auto ls = expect_line(in, "rate_hz", line_no);
    m.features.rate_hz = read_values(ls, 1, "rate_hz", line_no)[0];
  }
  {
    auto ls = expect_line(in, "cutoff_hz", line_no);
    m.features.cutoff_hz = read_values(ls, 1, "cutoff_hz", line_no)[0];
  }
  std::size_t d = 0;
  {
    auto ls = expect_line(in, "dimension", line_no);
    if (!(ls >> d) || d != m.channels * kFeaturesPerChannel) throw ParseError("model file: bad dimension");
  }
  {
    auto ls = expect_line(in, "mean", line_no);
    m.feature_mean = read_values(ls, d, "mean", line_no);
  }
  {
    auto ls = expect_line(in, "std", line_no);
    m.feature_std = read_values(ls, d, "std", line_no);
    for (double v : m.feature_std)
      if (!(v > 0.0)) throw ParseError("model file: nonpositive standardization scale");
  }
  for (std::size_t c = 0; c < kNumCommands; ++c) {
    auto ls = expect_line(in, "class", line_no);
    std::string name;
    ls >> name;
    if (name != command_name(kAllCommands[c]))
      throw ParseError("model file line " + std::to_string(line_no) + ": expected class " +
                       std::string(command_name(kAllCommands[c])));
    auto v = read_values(ls, d + 1, "class", line_no);
    m.bias[c] = v[0];
    m.weights[c].assign(v.begin() + 1, v.end());
  }
  {
    auto ls = expect_line(in, "folds", line_no);
    std::size_t k = 0;
    if (!(ls >> k)) throw ParseError("model file: bad folds line");
    m.fold_accuracy = read_values(ls, k, "folds", line_no);
  }
  return m;
}

CommandModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace rotorsense
