#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rotorsense/event_core.hpp"

namespace rotorsense {

// Objective values: exp() of per-pixel counts needs the long double range.
using Score = long double;
inline constexpr std::uint32_t kMaxHMax = 11000;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Integer-aligned pixel window. Pixel (i, j) covers [x0+i-0.5, x0+i+0.5) x [y0+j-0.5, y0+j+0.5).
struct Patch {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  std::size_t area() const { return std::size_t(width) * std::size_t(height); }
  // Square window holding every point within `radius` of `center`.
  static Patch around(Point2 center, double radius);
  friend bool operator==(const Patch&, const Patch&) = default;
};

// Histogram of warped events over a patch.
struct WarpedImage {
  Patch patch;
  Timestamp t_ref = 0;
  Point2 origin;
  std::vector<std::uint32_t> counts;  // row-major, patch.width * patch.height
  std::size_t dropped = 0;            // warped points outside the patch

  std::uint32_t at(int i, int j) const { return counts[std::size_t(j) * patch.width + i]; }
  std::uint64_t total() const;
};

struct ObjectiveParams {
  double epsilon = 1.0;        // sparsity reward offset, > 0
  double weight_acc = 1.0;
  double weight_spa = 1.0;
  std::uint32_t h_max = 10000;  // pixel counts are capped here inside exp()
};

// Per-pixel reward term w_acc * exp(h) + w_spa / (exp(h) - 1 + eps) with h
// capped at h_max, filled lazily. Not thread-safe; use one per thread.
class RewardTable {
 public:
  explicit RewardTable(const ObjectiveParams& params);
  Score operator()(std::uint32_t h) const;

 private:
  std::uint32_t h_max_;
  double w_acc_, w_spa_, eps_;
  mutable std::vector<Score> terms_;
};

enum class Execution { serial, parallel };

// Rotates each event about `center` by spin * omega * (t - t_ref), undoing
// the blade motion back to t_ref. omega in rad/s. Output keeps input order.
std::vector<Point2> warp(std::span<const Event> events, Point2 center, Timestamp t_ref, double omega,
                         int spin = 1);

// Nearest-pixel rasterization; points outside the patch are dropped and counted.
WarpedImage accumulate(std::span<const Point2> points, const Patch& patch);

// sum exp(h)
Score reward_accumulation(const WarpedImage& image, std::uint32_t h_max = 10000);
// sum 1 / (exp(h) - 1 + epsilon)
Score reward_sparsity(const WarpedImage& image, double epsilon, std::uint32_t h_max = 10000);

// Batch pre-processed for repeated objective evaluation: offsets from the
// rotation center grouped into runs of equal timestamp.
class PreparedBatch {
 public:
  PreparedBatch(std::span<const Event> events, Point2 center, Timestamp t_ref, Patch patch);

  std::size_t size() const { return dx_.size(); }
  const Patch& patch() const { return patch_; }
  Point2 center() const { return center_; }
  Timestamp t_ref() const { return t_ref_; }

  // R = w_acc * r_acc + w_spa * r_spa of the warped image. `scratch` must hold
  // patch().area() zeros and is left zeroed.
  Score objective(double omega, int spin, const RewardTable& table, std::vector<std::uint32_t>& scratch) const;
  Score objective(double omega, int spin, const ObjectiveParams& params) const;

 private:
  std::vector<double> dx_, dy_;
  std::vector<double> run_dt_s_;         // t - t_ref per run, seconds
  std::vector<std::uint32_t> run_end_;   // exclusive end index per run
  Point2 center_;
  Timestamp t_ref_;
  Patch patch_;
};

// Objective of a batch at one candidate speed. The patch defaults to the
// square holding every event's radius about `center`.
Score objective(std::span<const Event> batch, Point2 center, Timestamp t_ref, double omega,
                const ObjectiveParams& params = {}, int spin = 1);
Score objective(std::span<const Event> batch, Point2 center, Timestamp t_ref, double omega, const Patch& patch,
                const ObjectiveParams& params = {}, int spin = 1);

// Square patch covering the disc swept by the batch around `center`.
Patch patch_for(std::span<const Event> batch, Point2 center, double margin = 2.0);

// Objective over a list of candidate speeds. The serial version is the
// reference; the parallel one splits candidates across OpenMP threads and
// returns identical values.
std::vector<Score> objective_grid(const PreparedBatch& batch, std::span<const double> omegas, int spin,
                                  const ObjectiveParams& params, Execution exec = Execution::serial);

struct EstimatorConfig {
  double bracket_lo_rpm = 1500.0;
  double bracket_hi_rpm = 4500.0;
  int grid = 64;
  double tol_rpm = 0.05;
  int spin = 1;
  ObjectiveParams objective;
  // Robust peak prominence below which the objective counts as flat:
  // (max - median) / (1.4826 * MAD) over the grid.
  double min_prominence = 10.0;
  Execution execution = Execution::serial;
};

struct SpeedEstimate {
  int prop_id = 0;
  Timestamp t_ref = 0;
  double omega = 0.0;  // rad/s
  Score objective_value = 0.0L;
  std::size_t n_events = 0;
  double grid_best_omega = 0.0;
  Score grid_best_objective = 0.0L;

  double rpm() const;
};

// Grid scan over the bracket, then Brent refinement inside the best grid
// cell. t_ref defaults to the first event time. Throws NumericalError on an
// empty batch or a flat objective.
SpeedEstimate estimate_speed(std::span<const Event> batch, Point2 center, const EstimatorConfig& config,
                             int prop_id = 0);
SpeedEstimate estimate_speed(std::span<const Event> batch, Point2 center, Timestamp t_ref,
                             const EstimatorConfig& config, int prop_id = 0);

void validate(const EstimatorConfig& config);

}  // namespace rotorsense
