#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rotorsense/event_core.hpp"
#include "rotorsense/motion_comp.hpp"

namespace rotorsense {

// Event-count and positive-polarity heatmaps over square spatial bins.
struct HeatmapPair {
  int bin_size = 5;
  int bins_x = 0;
  int bins_y = 0;
  Timestamp t0 = 0;
  Timestamp t1 = 0;
  std::vector<std::uint32_t> count;     // row-major bins_x * bins_y
  std::vector<std::uint32_t> positive;  // events with p = +1 per bin

  std::size_t bin_index(int x, int y) const {
    return std::size_t(y / bin_size) * std::size_t(bins_x) + std::size_t(x / bin_size);
  }
  // positive / count, 0 for empty bins
  double positive_fraction(std::size_t bin) const {
    return count[bin] ? double(positive[bin]) / double(count[bin]) : 0.0;
  }
  std::uint64_t total() const;
};

struct FilterParams {
  Timestamp window_us = 60000;  // two blade passes at 1000 RPM
  int bin_size = 5;
  double count_ratio = 1.0 / 3.0;
  double polarity_lo = 0.3;
  double polarity_hi = 0.7;
};

void validate(const FilterParams& params);

// Bins the events with t in [t0, t1].
HeatmapPair build_heatmaps(std::span<const Event> events, Timestamp t0, Timestamp t1, int bin_size,
                           const SensorGeometry& geometry);

// Keeps windowed events whose bin has count >= count_ratio * (mean count of
// nonzero bins) and a positive fraction inside [lo, hi]. Order is preserved.
std::vector<Event> filter_noise(std::span<const Event> events, const HeatmapPair& heatmaps,
                                double count_ratio = 1.0 / 3.0, double polarity_lo = 0.3, double polarity_hi = 0.7);

// Applies the heatmap filter over consecutive windows of the whole stream and
// returns the indices of kept events. Window k covers (t0 + k*w, t0 + (k+1)*w],
// the first one also including t0.
std::vector<std::size_t> filter_stream(std::span<const Event> events, const SensorGeometry& geometry,
                                       const FilterParams& params);

struct PropellerTrack {
  int prop_id = 0;
  std::vector<Event> events;
  std::vector<std::size_t> indices;  // positions in the segmented input
  Point2 centroid;
  std::size_t member_count = 0;
};

struct KMeansParams {
  int k = 1;
  int max_iters = 100;
  double tol = 1e-3;   // centroid shift in px
  std::uint64_t seed = 0;  // 0: first centroid is the earliest event
};

struct KMeansReport {
  std::vector<double> objective_history;  // within-cluster SSE after each iteration
  int iterations = 0;
  int reseeds = 0;
};

// Lloyd's algorithm on event coordinates with farthest-point seeding.
// Tracks are ordered by centroid (y, then x). Throws ConfigError when k
// exceeds the number of distinct coordinates.
std::vector<PropellerTrack> segment_propellers(std::span<const Event> events, const KMeansParams& params,
                                               KMeansReport* report = nullptr);

}  // namespace rotorsense
