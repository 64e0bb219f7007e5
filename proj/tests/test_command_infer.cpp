#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "rotorsense/command_infer.hpp"
#include "rotorsense/errors.hpp"
#include "rotorsense/propeller_sim.hpp"

using namespace rotorsense;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double f, double rate, std::size_t n, double amp = 1.0, double offset = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = offset + amp * std::sin(2 * kPi * f * double(i) / rate);
  return x;
}

// Six channels, class c lifts channel c: one-vs-rest separable.
std::vector<CommandSample> separable_set(int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 10.0);
  std::vector<CommandSample> out;
  for (Command c : kAllCommands)
    for (int n = 0; n < per_class; ++n) {
      CommandSample s;
      s.label = c;
      s.rpm.assign(6, std::vector<double>(64));
      for (std::size_t ch = 0; ch < 6; ++ch)
        for (auto& v : s.rpm[ch]) v = 3000 + (ch == std::size_t(c) ? 600 : 0) + g(rng);
      out.push_back(std::move(s));
    }
  return out;
}

}  // namespace

TEST_CASE("fft agrees with a direct DFT") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {g(rng), g(rng)};
    auto y = x;
    fft(y);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> want = 0;
      for (std::size_t j = 0; j < n; ++j) want += x[j] * std::polar(1.0, -2 * kPi * double(j * k % n) / double(n));
      CHECK(std::abs(y[k] - want) < 1e-9 * double(n));
    }
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS_AS(fft(bad), ConfigError);
}

TEST_CASE("lowpass properties") {
  const std::vector<double> flat(200, 42.5);
  const auto y = lowpass(flat, 20, 1000);
  for (double v : y) CHECK(v == doctest::Approx(42.5).epsilon(1e-14));

  // 400 Hz tone, 10 Hz cutoff: away from the ends the amplitude is tiny
  const auto hi = lowpass(sine(400, 1000, 1000), 10, 1000);
  double amp = 0;
  for (std::size_t i = 100; i < 900; ++i) amp = std::max(amp, std::abs(hi[i]));
  CHECK(amp < 0.1);

  // step: monotone, bounded by the input levels
  std::vector<double> step(300, 0.0);
  for (std::size_t i = 150; i < step.size(); ++i) step[i] = 1.0;
  const auto s = lowpass(step, 25, 1000);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] >= s[i - 1] - 1e-15);
  for (double v : s) {
    CHECK(v >= -1e-15);
    CHECK(v <= 1.0 + 1e-15);
  }

  CHECK_THROWS_AS(lowpass(flat, 501, 1000), ConfigError);
  CHECK_THROWS_AS(lowpass(flat, 0, 1000), ConfigError);
  CHECK_NOTHROW(lowpass(flat, 500, 1000));
}

TEST_CASE("channel features of a constant trace") {
  const std::vector<double> flat(100, 9.0e4);
  const auto f = channel_features(flat, 1000);
  CHECK(f[0] == 9.0e4);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 0.0);
  CHECK(f[4] == 0.0);
}

TEST_CASE("dominant frequency of a 10 Hz tone") {
  const auto f = channel_features(sine(10, 1000, 1024, 2.0, 5.0), 1000);
  CHECK(std::abs(f[2] - 10.0) <= 1000.0 / 1024.0);
  CHECK(f[0] == doctest::Approx(5.0).epsilon(1e-2));
  CHECK(f[1] == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-2));
  // Parseval on the one-sided non-DC bins: energy ~ N * sum(x - mean)^2 / 2
  CHECK(f[3] == doctest::Approx(1024.0 * 1024.0 * 2.0 / 2.0).epsilon(0.02));
}

TEST_CASE("white noise has higher spectral entropy than a tone") {
  const auto tone = channel_features(sine(37, 1000, 512), 1000);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> x(512);
    for (auto& v : x) v = g(rng);
    CHECK(channel_features(x, 1000)[4] > tone[4]);
  }
}

TEST_CASE("features are a pure function") {
  DroneSpec d;
  d.jitter_rpm = 60;
  const auto ds = generate_command_dataset(d, 2, 100, 5);
  for (const auto& s : ds) {
    const auto a = extract_features(s, {}), b = extract_features(s, {});
    CHECK(a.size() == 5 * s.rpm.size());
    CHECK(a == b);
  }
}

TEST_CASE("zero-order hold resampling") {
  const std::vector<double> t{1000, 3500, 4000}, v{1, 2, 3};
  const auto r = resample_zoh(t, v, 0, 1000, 6);
  CHECK(r == std::vector<double>{1, 1, 1, 1, 3, 3});
  CHECK_THROWS_AS(resample_zoh(std::vector<double>{}, std::vector<double>{}, 0, 1000, 3), DataError);
}

TEST_CASE("stratified folds are disjoint, covering and balanced") {
  std::vector<Command> labels;
  for (Command c : kAllCommands)
    for (int i = 0; i < 23 + int(c); ++i) labels.push_back(c);
  const auto fold = stratified_folds(labels, 5, 3);
  REQUIRE(fold.size() == labels.size());
  for (Command c : kAllCommands) {
    std::array<int, 5> n{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      REQUIRE(fold[i] >= 0);
      REQUIRE(fold[i] < 5);
      if (labels[i] == c) ++n[std::size_t(fold[i])];
    }
    CHECK(*std::max_element(n.begin(), n.end()) - *std::min_element(n.begin(), n.end()) <= 1);
  }
  CHECK(fold == stratified_folds(labels, 5, 3));
  CHECK_THROWS_AS(stratified_folds(labels, 1, 3), ConfigError);
}

TEST_CASE("separable set trains to perfect fold accuracy") {
  const auto ds = separable_set(20, 7);
  const auto model = train(ds, {});
  REQUIRE(model.fold_accuracy.size() == 5);
  for (double a : model.fold_accuracy) CHECK(a == 1.0);
  for (const auto& s : ds) CHECK(predict(model, s).command == s.label);
  CHECK(model.dimension() == 30);
}

TEST_CASE("training is deterministic per seed") {
  const auto ds = separable_set(8, 2);
  TrainConfig cfg;
  cfg.seed = 9;
  const auto a = train(ds, cfg), b = train(ds, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.fold_accuracy == b.fold_accuracy);
}

TEST_CASE("missing class is named") {
  auto ds = separable_set(6, 1);
  std::erase_if(ds, [](const CommandSample& s) { return s.label == Command::roll; });
  try {
    train(ds, {});
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("roll") != std::string::npos);
  }
}

TEST_CASE("ties go to the earlier class") {
  CommandModel m;
  m.channels = 1;
  m.window = 4;
  m.feature_mean.assign(5, 0.0);
  m.feature_std.assign(5, 1.0);
  for (auto& w : m.weights) w.assign(5, 0.0);
  const std::vector<double> zero(5, 0.0);
  CHECK(predict_features(m, zero).command == Command::hover);
  m.bias[3] = m.bias[4] = 1.0;
  CHECK(predict_features(m, zero).command == Command::yaw);
  CHECK_THROWS_AS(predict_features(m, std::vector<double>(4, 0.0)), DataError);
  CommandSample wrong;
  wrong.rpm.assign(2, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(predict(m, wrong), DataError);
  wrong.rpm.assign(1, std::vector<double>(5, 1.0));
  CHECK_THROWS_AS(predict(m, wrong), DataError);
}

TEST_CASE("simulated climb pattern is classified as climb") {
  DroneSpec d;
  d.jitter_rpm = 0.02 * d.hover_rpm;
  const auto ds = generate_command_dataset(d, 60, 100, 13);
  const auto model = train(ds, {});
  // all four rotors lag toward hover + delta, window ends 150 ms after the switch
  CommandSample s;
  s.rpm.assign(4, {});
  const double lag = 1.0 - std::exp(-1e-3 / d.motor_tau_s);
  double m = d.hover_rpm;
  for (int k = 0; k < 150; ++k) {
    m += (d.hover_rpm + d.delta_rpm - m) * lag;
    if (k >= 50)
      for (auto& ch : s.rpm) ch.push_back(m);
  }
  CHECK(predict(model, s).command == Command::climb);
}

TEST_CASE("predictions survive rescaling the traces") {
  DroneSpec d;
  d.jitter_rpm = 60;
  const auto train_set = generate_command_dataset(d, 20, 100, 1);
  const auto test_set = generate_command_dataset(d, 5, 100, 2);
  const auto base = train(train_set, {});
  for (double c : {2.0, 3.0}) {
    auto scale = [c](std::vector<CommandSample> v) {
      for (auto& s : v)
        for (auto& ch : s.rpm)
          for (auto& x : ch) x *= c;
      return v;
    };
    const auto scaled = train(scale(train_set), {});
    const auto scaled_test = scale(test_set);
    for (std::size_t i = 0; i < test_set.size(); ++i)
      CHECK(predict(scaled, scaled_test[i]).command == predict(base, test_set[i]).command);
  }
}

TEST_CASE("model file round trip") {
  const auto ds = separable_set(6, 4);
  const auto m = train(ds, {});
  std::stringstream buf;
  write_model(m, buf);
  const auto back = read_model(buf);
  CHECK(back.channels == m.channels);
  CHECK(back.window == m.window);
  CHECK(back.features.rate_hz == m.features.rate_hz);
  CHECK(back.features.cutoff_hz == m.features.cutoff_hz);
  CHECK(back.feature_mean == m.feature_mean);
  CHECK(back.feature_std == m.feature_std);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.fold_accuracy == m.fold_accuracy);

  std::stringstream bad("rotorsense-command-model 2\n");
  CHECK_THROWS_AS(read_model(bad), ParseError);
  std::string text = buf.str();
  text.replace(text.find("window"), 6, "widow");
  std::stringstream bad2(text);
  CHECK_THROWS_AS(read_model(bad2), ParseError);
}
