#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "rotorsense/event_core.hpp"
#include "rotorsense/motion_comp.hpp"

namespace rotorsense {

// How the consistency rate compares two objective values: `log` compares
// log R (the default, see consistency_rate), `raw` compares R itself.
enum class ConsistencyScale { log, raw };

struct BatchPolicy {
  Timestamp dt_us = 1000;     // bundle interval
  double delta = 0.3;         // consistency threshold
  int beta = 8;               // max bundles per batch
  double sample_fraction = 1.0;
  double radius_px = 2.0;     // neighbourhood radius in the scaled (x, y, t) cloud
  double st_ratio_us = 100.0; // microseconds per pixel when scaling time
  ConsistencyScale scale = ConsistencyScale::log;
};

void validate(const BatchPolicy& policy);

enum class StopReason { consistency, bundle_limit, stream_end };
std::string_view stop_reason_name(StopReason reason);

// |log R(candidate) - log R(last)| / log R(last), both bundles warped with
// `omega` to `t_ref` and rasterized on `patch`. +inf for an empty candidate.
// Raw R is dominated by exp(peak count), so its ratio swings by orders of
// magnitude between bundles of a constant-speed rotor; the log keeps the
// rate on the scale of the count changes.
double consistency_rate(std::span<const Event> last, std::span<const Event> candidate, double omega, Point2 center,
                        Timestamp t_ref, const Patch& patch, const ObjectiveParams& params = {}, int spin = 1,
                        ConsistencyScale scale = ConsistencyScale::log);
// Same rate from two objective values. The raw scale gives
// |R(candidate) - R(last)| / R(last).
double consistency_rate(Score r_last, Score r_candidate, ConsistencyScale scale = ConsistencyScale::log);

struct GrowResult {
  EventBatch batch;
  StopReason reason = StopReason::stream_end;
  std::vector<double> lambdas;  // rate of every candidate tested, in order
};

// Starts from bundles[0] and appends the next bundle while its consistency
// rate against the batch's last bundle is below delta and the batch has fewer
// than beta bundles. All rates share the first bundle's start as t_ref and a
// patch covering the first beta + 1 bundles.
GrowResult grow_batch(std::span<const EventBundle> bundles, const BatchPolicy& policy, double omega, Point2 center,
                      const ObjectiveParams& params = {}, int spin = 1);

// Neighbour count of every event (itself included) within radius_px in the
// cloud (x, y, t / st_ratio_us). Serial is the reference; parallel splits the
// queries across OpenMP threads.
std::vector<std::uint32_t> local_density(std::span<const Event> events, double radius_px, double st_ratio_us,
                                         Execution exec = Execution::serial);

// Brute-force O(n^2) density, for testing.
std::vector<std::uint32_t> local_density_naive(std::span<const Event> events, double radius_px, double st_ratio_us);

// Keeps ceil(sample_fraction * n) events drawn without replacement with
// probability proportional to local density (exponential-key reservoir).
// Output keeps input order.
std::vector<Event> density_downsample(std::span<const Event> events, const BatchPolicy& policy, std::uint64_t seed,
                                      Execution exec = Execution::serial);

// Indices into `weights` of k items drawn without replacement with
// probability proportional to weight, ascending.
std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t k, std::uint64_t seed);

}  // namespace rotorsense
