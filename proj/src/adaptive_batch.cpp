#include "rotorsense/adaptive_batch.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <random>
#include <unordered_map>

#include "rotorsense/errors.hpp"

namespace rotorsense {

void validate(const BatchPolicy& p) {
  if (p.dt_us == 0) throw ConfigError("bundle interval must be positive");
  if (!(p.delta > 0.0)) throw ConfigError("consistency threshold must be > 0");
  if (p.beta < 1) throw ConfigError("bundle limit must be >= 1");
  if (!(p.sample_fraction > 0.0 && p.sample_fraction <= 1.0)) throw ConfigError("sample fraction must be in (0, 1]");
  if (!(p.radius_px > 0.0)) throw ConfigError("neighbourhood radius must be > 0");
  if (!(p.st_ratio_us > 0.0)) throw ConfigError("space-time ratio must be > 0");
}

std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::consistency: return "consistency";
    case StopReason::bundle_limit: return "bundle_limit";
    case StopReason::stream_end: return "stream_end";
  }
  return "?";
}

double consistency_rate(Score r_last, Score r_candidate, ConsistencyScale scale) {
  if (scale == ConsistencyScale::raw) return static_cast<double>(std::fabs(r_candidate - r_last) / r_last);
  const Score a = std::log(r_last), b = std::log(r_candidate);
  return static_cast<double>(std::fabs(b - a) / a);
}

double consistency_rate(std::span<const Event> last, std::span<const Event> candidate, double omega, Point2 center,
                        Timestamp t_ref, const Patch& patch, const ObjectiveParams& params, int spin,
                        ConsistencyScale scale) {
  if (candidate.empty()) return std::numeric_limits<double>::infinity();
  const Score r_last = objective(last, center, t_ref, omega, patch, params, spin);
  const Score r_cand = objective(candidate, center, t_ref, omega, patch, params, spin);
  return consistency_rate(r_last, r_cand, scale);
}

GrowResult grow_batch(std::span<const EventBundle> bundles, const BatchPolicy& policy, double omega, Point2 center,
                      const ObjectiveParams& params, int spin) {
  validate(policy);
  if (bundles.empty()) throw DataError("cannot grow a batch from an empty bundle stream");
  GrowResult out;
  const Timestamp t_ref = bundles[0].t_start;

  double radius = 0.0;
  const std::size_t horizon = std::min(bundles.size(), std::size_t(policy.beta) + 1);
  for (std::size_t b = 0; b < horizon; ++b)
    for (const auto& e : bundles[b].events) radius = std::max(radius, std::hypot(e.x - center.x, e.y - center.y));
  const Patch patch = Patch::around(center, radius + 2.0);
  const RewardTable table(params);
  std::vector<std::uint32_t> scratch(patch.area(), 0);
  auto score = [&](const EventBundle& b) {
    return PreparedBatch(b.events, center, t_ref, patch).objective(omega, spin, table, scratch);
  };

  out.batch.append(bundles[0]);
  Score r_last = score(bundles[0]);
  for (std::size_t next = 1;; ++next) {
    if (next >= bundles.size()) {
      out.reason = StopReason::stream_end;
      break;
    }
    if (out.batch.n_bundles() >= std::size_t(policy.beta)) {
      out.reason = StopReason::bundle_limit;
      break;
    }
    double lambda = std::numeric_limits<double>::infinity();
    Score r_next = 0.0L;
    if (!bundles[next].events.empty()) {
      r_next = score(bundles[next]);
      lambda = consistency_rate(r_last, r_next, policy.scale);
    }
    out.lambdas.push_back(lambda);
    if (!(lambda < policy.delta)) {
      out.reason = StopReason::consistency;
      break;
    }
    out.batch.append(bundles[next]);
    r_last = r_next;
  }
  return out;
}

namespace {

struct Scaled {
  double x, y, t;
};

std::int64_t cell_of(double v, double size) { return static_cast<std::int64_t>(std::floor(v / size)); }

// Events sorted by grid cell (t, y, x); each (t, y) row of cells maps to a
// contiguous range of slots.
struct GridHash {
  struct RowKey {
    std::int64_t t, y;
    bool operator==(const RowKey&) const = default;
  };
  struct RowHash {
    std::size_t operator()(const RowKey& k) const {
      return std::hash<std::int64_t>{}(k.t * 0x9e3779b97f4a7c15LL ^ k.y);
    }
  };

  double size;
  std::vector<Scaled> pts;    // sorted slot order
  std::vector<std::int64_t> cx;  // x cell per sorted slot
  std::vector<std::uint32_t> slot_of;  // event index -> sorted slot
  std::unordered_map<RowKey, std::pair<std::uint32_t, std::uint32_t>, RowHash> rows;

  GridHash(std::span<const Event> events, double r, double st_ratio) : size(r) {
    const double t0 = events.empty() ? 0.0 : double(events.front().t);
    std::vector<Scaled> raw;
    raw.reserve(events.size());
    // Shift time so that large timestamps keep their precision.
    for (const auto& e : events) raw.push_back({double(e.x), double(e.y), (double(e.t) - t0) / st_ratio});
    std::vector<std::array<std::int64_t, 3>> key(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
      key[i] = {cell_of(raw[i].t, size), cell_of(raw[i].y, size), cell_of(raw[i].x, size)};
    std::vector<std::uint32_t> order(raw.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return key[a] < key[b]; });
    pts.resize(raw.size());
    cx.resize(raw.size());
    slot_of.resize(raw.size());
    for (std::uint32_t s = 0; s < order.size(); ++s) {
      pts[s] = raw[order[s]];
      cx[s] = key[order[s]][2];
      slot_of[order[s]] = s;
      const RowKey rk{key[order[s]][0], key[order[s]][1]};
      auto [it, inserted] = rows.try_emplace(rk, s, s + 1);
      if (!inserted) it->second.second = s + 1;
    }
  }

  std::uint32_t count(std::size_t event) const {
    const std::uint32_t self = slot_of[event];
    const Scaled& p = pts[self];
    const std::int64_t ct = cell_of(p.t, size), cy = cell_of(p.y, size), c = cx[self];
    const double r2 = size * size;
    std::uint32_t n = 0;
    for (std::int64_t a = ct - 1; a <= ct + 1; ++a)
      for (std::int64_t b = cy - 1; b <= cy + 1; ++b) {
        const auto row = rows.find({a, b});
        if (row == rows.end()) continue;
        const auto first = cx.begin() + row->second.first, last = cx.begin() + row->second.second;
        const auto lo = std::lower_bound(first, last, c - 1);
        for (auto it = lo; it != last && *it <= c + 1; ++it) {
          const Scaled& q = pts[std::size_t(it - cx.begin())];
          const double dx = q.x - p.x, dy = q.y - p.y, dt = q.t - p.t;
          n += dx * dx + dy * dy + dt * dt <= r2;
        }
      }
    return n;
  }
};

}  // namespace

std::vector<std::uint32_t> local_density(std::span<const Event> events, double radius_px, double st_ratio_us,
                                         Execution exec) {
  if (!(radius_px > 0.0) || !(st_ratio_us > 0.0)) throw ConfigError("neighbourhood radius and ratio must be > 0");
  const GridHash grid(events, radius_px, st_ratio_us);
  std::vector<std::uint32_t> density(events.size());
  const auto n = static_cast<std::int64_t>(events.size());
  if (exec == Execution::serial) {
    for (std::int64_t i = 0; i < n; ++i) density[i] = grid.count(std::size_t(i));
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) density[i] = grid.count(std::size_t(i));
  }
  return density;
}

std::vector<std::uint32_t> local_density_naive(std::span<const Event> events, double radius_px, double st_ratio_us) {
  std::vector<std::uint32_t> density(events.size(), 0);
  const double t0 = events.empty() ? 0.0 : double(events.front().t);
  const double r2 = radius_px * radius_px;
  for (std::size_t i = 0; i < events.size(); ++i)
    for (std::size_t j = 0; j < events.size(); ++j) {
      const double dx = double(events[i].x) - events[j].x, dy = double(events[i].y) - events[j].y;
      const double dt = (double(events[i].t) - t0) / st_ratio_us - (double(events[j].t) - t0) / st_ratio_us;
      density[i] += dx * dx + dy * dy + dt * dt <= r2;
    }
  return density;
}

std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t k, std::uint64_t seed) {
  if (k >= weights.size()) {
    std::vector<std::size_t> all(weights.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Key log(u) / w; the k largest keys form the sample.
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw DataError("sampling weights must be positive");
    const double u = 1.0 - unif(rng);  // (0, 1]
    const double key = std::log(u) / weights[i];
    if (heap.size() < k) {
      heap.emplace(key, i);
    } else if (key > heap.top().first) {
      heap.pop();
      heap.emplace(key, i);
    }
  }
  std::vector<std::size_t> picked;
  picked.reserve(k);
  while (!heap.empty()) {
    picked.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<Event> density_downsample(std::span<const Event> events, const BatchPolicy& policy, std::uint64_t seed,
                                      Execution exec) {
  validate(policy);
  if (policy.sample_fraction >= 1.0) return {events.begin(), events.end()};
  const auto k = static_cast<std::size_t>(std::ceil(policy.sample_fraction * double(events.size()) - 1e-9));
  const std::vector<std::uint32_t> density = local_density(events, policy.radius_px, policy.st_ratio_us, exec);
  const std::vector<double> weights(density.begin(), density.end());
  std::vector<Event> out;
  out.reserve(k);
  for (std::size_t i : weighted_sample(weights, k, seed)) out.push_back(events[i]);
  return out;
}

}  // namespace rotorsense
