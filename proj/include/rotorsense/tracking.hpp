#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rotorsense/adaptive_batch.hpp"
#include "rotorsense/motion_comp.hpp"

namespace rotorsense {

struct TrackingOptions {
  BatchPolicy policy;
  EstimatorConfig estimator;  // its bracket seeds the first batch
  // Raise the bundle limit so a batch spans at least this rotation at the
  // prior speed (0 disables). Short batches on slow rotors cover too little
  // angle for a sharp objective peak.
  double target_rotation_rad = 3.5;
  // Once a prior exists the bracket becomes [(1 - span), (1 + span)] * prior.
  double prior_span = 0.5;
  bool auto_spin = true;
  std::uint64_t seed = 0;  // downsampling seed, offset per batch
};

struct TrackedBatch {
  SpeedEstimate estimate;
  StopReason reason = StopReason::stream_end;
  std::size_t n_bundles = 0;
  std::size_t n_events = 0;  // before downsampling
  Timestamp t_end = 0;
};

struct TrackingResult {
  std::vector<TrackedBatch> batches;
  int spin = 1;
  std::size_t skipped = 0;  // empty or degenerate batches
};

// Picks the rotation sense whose best grid objective over the bracket is higher.
int detect_spin(std::span<const Event> batch, Point2 center, const EstimatorConfig& config);

// Slices a track into bundles, grows consecutive adaptive batches and
// estimates each one, feeding every estimate forward as the next prior.
// `origin` anchors the bundle grid (defaults to the first event).
TrackingResult estimate_track(std::span<const Event> events, Point2 center, const TrackingOptions& options,
                              int prop_id = 0, std::optional<Timestamp> origin = std::nullopt);

}  // namespace rotorsense
