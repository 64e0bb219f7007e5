#include "rotorsense/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "rotorsense/errors.hpp"

namespace rotorsense {

std::uint64_t HeatmapPair::total() const {
  std::uint64_t s = 0;
  for (auto c : count) s += c;
  return s;
}

void validate(const FilterParams& p) {
  if (p.window_us == 0) throw ConfigError("filter window must be positive");
  if (p.bin_size < 1) throw ConfigError("bin size must be >= 1");
  if (p.count_ratio < 0) throw ConfigError("count ratio must be nonnegative");
  if (!(p.polarity_lo >= 0.0 && p.polarity_lo <= p.polarity_hi && p.polarity_hi <= 1.0))
    throw ConfigError("polarity band must satisfy 0 <= lo <= hi <= 1");
}

HeatmapPair build_heatmaps(std::span<const Event> events, Timestamp t0, Timestamp t1, int bin_size,
                           const SensorGeometry& geometry) {
  if (bin_size < 1) throw ConfigError("bin size must be >= 1");
  if (t1 < t0) throw ConfigError("heatmap window is empty");
  HeatmapPair h;
  h.bin_size = bin_size;
  h.bins_x = (geometry.width + bin_size - 1) / bin_size;
  h.bins_y = (geometry.height + bin_size - 1) / bin_size;
  h.t0 = t0;
  h.t1 = t1;
  h.count.assign(std::size_t(h.bins_x) * h.bins_y, 0);
  h.positive.assign(h.count.size(), 0);
  for (const auto& e : events) {
    if (e.t < t0 || e.t > t1) continue;
    const std::size_t b = h.bin_index(e.x, e.y);
    ++h.count[b];
    if (e.p > 0) ++h.positive[b];
  }
  return h;
}

namespace {

// Pass/fail per bin for the count and polarity rules.
std::vector<char> passing_bins(const HeatmapPair& h, double count_ratio, double lo, double hi) {
  std::uint64_t total = 0, nonzero = 0;
  for (auto c : h.count) {
    total += c;
    nonzero += c > 0;
  }
  std::vector<char> pass(h.count.size(), 0);
  if (nonzero == 0) return pass;
  const double threshold = count_ratio * double(total) / double(nonzero);
  for (std::size_t b = 0; b < h.count.size(); ++b) {
    if (h.count[b] == 0) continue;
    const double frac = h.positive_fraction(b);
    pass[b] = double(h.count[b]) >= threshold && frac >= lo && frac <= hi;
  }
  return pass;
}

}  // namespace

std::vector<Event> filter_noise(std::span<const Event> events, const HeatmapPair& heatmaps, double count_ratio,
                                double polarity_lo, double polarity_hi) {
  const std::vector<char> pass = passing_bins(heatmaps, count_ratio, polarity_lo, polarity_hi);
  std::vector<Event> out;
  for (const auto& e : events) {
    if (e.t < heatmaps.t0 || e.t > heatmaps.t1) continue;
    const std::size_t b = heatmaps.bin_index(e.x, e.y);
    if (b < pass.size() && pass[b]) out.push_back(e);
  }
  return out;
}

std::vector<std::size_t> filter_stream(std::span<const Event> events, const SensorGeometry& geometry,
                                       const FilterParams& params) {
  validate(params);
  std::vector<std::size_t> kept;
  if (events.empty()) return kept;
  const Timestamp t0 = events.front().t;
  std::size_t begin = 0;
  while (begin < events.size()) {
    // Window containing events[begin]; same boundary rule as slice_bundles.
    const Timestamp rel = events[begin].t - t0;
    const Timestamp m = rel == 0 ? 0 : (rel - 1) / params.window_us;
    const Timestamp w_end = t0 + (m + 1) * params.window_us;
    std::size_t end = begin;
    while (end < events.size() && events[end].t <= w_end) ++end;
    const auto window = events.subspan(begin, end - begin);
    const HeatmapPair h = build_heatmaps(window, window.front().t, window.back().t, params.bin_size, geometry);
    const std::vector<char> pass = passing_bins(h, params.count_ratio, params.polarity_lo, params.polarity_hi);
    for (std::size_t i = begin; i < end; ++i)
      if (pass[h.bin_index(events[i].x, events[i].y)]) kept.push_back(i);
    begin = end;
  }
  return kept;
}

// ---- K-means ----

namespace {

struct WeightedPoint {
  double x, y;
  double w;
  Timestamp first_t;
};

double sq(double v) { return v * v; }

std::size_t nearest(const std::vector<Point2>& c, double x, double y) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double d = sq(x - c[k].x) + sq(y - c[k].y);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

std::vector<PropellerTrack> segment_propellers(std::span<const Event> events, const KMeansParams& params,
                                               KMeansReport* report) {
  if (params.k < 1) throw ConfigError("K must be >= 1");
  if (params.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (events.empty()) throw DataError("cannot segment an empty event set");

  // Distinct coordinates with multiplicity, in (x, y) order so that results do
  // not depend on input order.
  std::map<std::pair<int, int>, std::size_t> slot;
  std::vector<WeightedPoint> pts;
  for (const auto& e : events) {
    auto [it, inserted] = slot.try_emplace({e.x, e.y}, pts.size());
    if (inserted) pts.push_back({double(e.x), double(e.y), 0.0, e.t});
    WeightedPoint& p = pts[it->second];
    p.w += 1.0;
    p.first_t = std::min(p.first_t, e.t);
  }
  {
    std::vector<WeightedPoint> ordered;
    ordered.reserve(pts.size());
    for (auto& [key, idx] : slot) {
      ordered.push_back(pts[idx]);
      idx = ordered.size() - 1;
    }
    pts = std::move(ordered);
  }
  if (std::size_t(params.k) > pts.size())
    throw ConfigError("K = " + std::to_string(params.k) + " exceeds the " + std::to_string(pts.size()) +
                      " distinct event coordinates");

  // Farthest-point seeding from the earliest event (or a seeded pick).
  std::vector<Point2> centroids;
  std::size_t first = 0;
  if (params.seed == 0) {
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].first_t < pts[first].first_t) first = i;
  } else {
    first = static_cast<std::size_t>((params.seed * 0x9e3779b97f4a7c15ULL) % pts.size());
  }
  centroids.push_back({pts[first].x, pts[first].y});
  std::vector<double> dmin(pts.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < std::size_t(params.k)) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      dmin[i] = std::min(dmin[i], sq(pts[i].x - centroids.back().x) + sq(pts[i].y - centroids.back().y));
      if (dmin[i] > far_d) {
        far_d = dmin[i];
        far = i;
      }
    }
    centroids.push_back({pts[far].x, pts[far].y});
  }

  KMeansReport local;
  KMeansReport& rep = report ? *report : local;
  rep = {};
  std::vector<std::size_t> assign(pts.size(), std::numeric_limits<std::size_t>::max());
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < params.max_iters; ++iter) {
    bool changed = false;
    bool reseeded = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::size_t k = nearest(centroids, pts[i].x, pts[i].y);
      changed |= k != assign[i];
      assign[i] = k;
    }
    std::vector<double> sx(centroids.size(), 0.0), sy(centroids.size(), 0.0), sw(centroids.size(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sx[assign[i]] += pts[i].w * pts[i].x;
      sy[assign[i]] += pts[i].w * pts[i].y;
      sw[assign[i]] += pts[i].w;
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      Point2 next = centroids[k];
      if (sw[k] > 0) {
        next = {sx[k] / sw[k], sy[k] / sw[k]};
      } else {
        // Empty cluster: move it to the point farthest from its own centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const double d = sq(pts[i].x - centroids[assign[i]].x) + sq(pts[i].y - centroids[assign[i]].y);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next = {pts[far].x, pts[far].y};
        ++rep.reseeds;
        reseeded = changed = true;
      }
      shift = std::max(shift, std::hypot(next.x - centroids[k].x, next.y - centroids[k].y));
      centroids[k] = next;
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      obj += pts[i].w * (sq(pts[i].x - centroids[assign[i]].x) + sq(pts[i].y - centroids[assign[i]].y));
    // A reseed may raise the SSE; otherwise Lloyd steps never do.
    if (!reseeded && obj > prev_obj * (1.0 + 1e-12) + 1e-9) throw std::logic_error("k-means objective increased");
    prev_obj = obj;
    rep.objective_history.push_back(obj);
    rep.iterations = iter + 1;
    if (!changed && shift < params.tol) break;
  }

  // Final assignment against the final centroids.
  for (std::size_t i = 0; i < pts.size(); ++i) assign[i] = nearest(centroids, pts[i].x, pts[i].y);

  std::vector<std::size_t> order(centroids.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (centroids[a].y != centroids[b].y) return centroids[a].y < centroids[b].y;
    return centroids[a].x < centroids[b].x;
  });
  std::vector<std::size_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

  std::vector<PropellerTrack> tracks(centroids.size());
  for (std::size_t r = 0; r < tracks.size(); ++r) tracks[r].prop_id = static_cast<int>(r);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::size_t k = rank[assign[slot.at({e.x, e.y})]];
    tracks[k].events.push_back(e);
    tracks[k].indices.push_back(i);
  }
  for (auto& t : tracks) {
    double sx = 0, sy = 0;
    for (const auto& e : t.events) {
      sx += e.x;
      sy += e.y;
    }
    t.member_count = t.events.size();
    if (t.member_count) t.centroid = {sx / double(t.member_count), sy / double(t.member_count)};
  }
  return tracks;
}

}  // namespace rotorsense
