#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "rotorsense/dynamics.hpp"

namespace rotorsense {

// Zero-phase smoothing: a single-pole low-pass run forward then backward,
// each pass started at its first sample. Throws ConfigError unless
// 0 < cutoff_hz <= rate_hz / 2.
std::vector<double> lowpass(std::span<const double> trace, double cutoff_hz, double rate_hz);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data);

// Zero-order hold of irregular samples onto `n` points spaced 1 / rate_hz
// from t_start_us. Points before the first sample take the first value.
std::vector<double> resample_zoh(std::span<const double> t_us, std::span<const double> values, double t_start_us,
                                 double rate_hz, std::size_t n);

inline constexpr std::size_t kFeaturesPerChannel = 5;

// Mean, standard deviation, dominant frequency (Hz), spectral energy and
// spectral entropy of one trace. The spectrum is that of the mean-removed
// trace zero-padded to a power of two; only the one-sided non-DC bins
// 1..N/2 enter the frequency features. Energy below a relative floor counts as
// zero, which also zeroes the dominant frequency and entropy.
std::array<double, kFeaturesPerChannel> channel_features(std::span<const double> trace, double rate_hz);

struct FeatureConfig {
  double rate_hz = 1000.0;
  double cutoff_hz = 50.0;
};

// Low-pass each RPM channel, square it in (rad/s)^2 and concatenate the
// channel features. Dimension 5 * channels.
std::vector<double> extract_features(const CommandSample& sample, const FeatureConfig& config);

struct TrainConfig {
  int folds = 5;
  double lambda = 1e-3;  // L2 regularization
  int epochs = 60;
  std::uint64_t seed = 0;
  FeatureConfig features;
};

struct CommandModel {
  static constexpr int kVersion = 1;

  std::size_t channels = 0;
  std::size_t window = 0;  // samples per channel
  FeatureConfig features;
  std::vector<double> feature_mean, feature_std;
  std::array<std::vector<double>, kNumCommands> weights;
  std::array<double, kNumCommands> bias{};
  std::vector<double> fold_accuracy;

  std::size_t dimension() const { return feature_mean.size(); }
};

struct Prediction {
  Command command = Command::hover;
  std::array<double, kNumCommands> scores{};
};

// Fold index per sample; each class is shuffled with the seed and dealt
// round-robin so folds are disjoint and stratified.
std::vector<int> stratified_folds(std::span<const Command> labels, int k, std::uint64_t seed);

// One-vs-rest linear SVMs on standardized features, fitted by Pegasos-style
// stochastic subgradient descent with a seeded shuffle per epoch. Runs k-fold
// cross-validation, then refits on every sample. Throws DataError when a
// class is missing or has fewer than k samples.
CommandModel train(std::span<const CommandSample> samples, const TrainConfig& config);

// Lower-level fit on already standardized feature rows.
struct LinearOvR {
  std::array<std::vector<double>, kNumCommands> weights;
  std::array<double, kNumCommands> bias{};
};
LinearOvR fit_ovr(const std::vector<std::vector<double>>& rows, std::span<const Command> labels,
                  const TrainConfig& config);

// Argmax of class scores; ties go to the earlier class in hover, climb,
// descent, yaw, roll, pitch order.
Prediction predict_features(const CommandModel& model, std::span<const double> features);
Prediction predict(const CommandModel& model, const CommandSample& sample);

double accuracy(const CommandModel& model, std::span<const CommandSample> samples);

void write_model(const CommandModel& model, std::ostream& out);
void write_model(const CommandModel& model, const std::filesystem::path& path);
CommandModel read_model(std::istream& in);
CommandModel read_model(const std::filesystem::path& path);

}  // namespace rotorsense
