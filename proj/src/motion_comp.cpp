#include "rotorsense/motion_comp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <boost/math/tools/minima.hpp>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/errors.hpp"

namespace rotorsense {

namespace {

void check_params(const ObjectiveParams& p) {
  if (!(p.epsilon > 0.0)) throw ConfigError("objective epsilon must be > 0");
  if (p.h_max > kMaxHMax) throw ConfigError("h_max above " + std::to_string(kMaxHMax) + " overflows the score range");
  if (p.weight_acc < 0.0 || p.weight_spa < 0.0) throw ConfigError("objective weights must be nonnegative");
}

double max_radius(std::span<const Event> events, Point2 c) {
  double r2 = 0.0;
  for (const auto& e : events) {
    const double dx = e.x - c.x, dy = e.y - c.y;
    r2 = std::max(r2, dx * dx + dy * dy);
  }
  return std::sqrt(r2);
}

}  // namespace

RewardTable::RewardTable(const ObjectiveParams& p)
    : h_max_(p.h_max), w_acc_(p.weight_acc), w_spa_(p.weight_spa), eps_(p.epsilon) {
  check_params(p);
  terms_.resize(std::min<std::size_t>(p.h_max, 1024) + 1, -1.0L);
}

Score RewardTable::operator()(std::uint32_t h) const {
  h = std::min(h, h_max_);
  if (h >= terms_.size()) terms_.resize(std::min<std::size_t>(h_max_, 2 * std::size_t(h)) + 1, -1.0L);
  Score& t = terms_[h];
  if (t < 0.0L) {
    const Score e = std::exp(static_cast<Score>(h));
    t = w_acc_ * e + w_spa_ / (e - 1.0L + eps_);
  }
  return t;
}

Patch Patch::around(Point2 c, double radius) {
  Patch p;
  p.x0 = static_cast<int>(std::floor(c.x - radius));
  p.y0 = static_cast<int>(std::floor(c.y - radius));
  p.width = static_cast<int>(std::ceil(c.x + radius)) - p.x0 + 1;
  p.height = static_cast<int>(std::ceil(c.y + radius)) - p.y0 + 1;
  return p;
}

std::uint64_t WarpedImage::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::vector<Point2> warp(std::span<const Event> events, Point2 center, Timestamp t_ref, double omega, int spin) {
  std::vector<Point2> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    const double dt = (double(e.t) - double(t_ref)) * 1e-6;
    const double theta = spin * omega * dt;
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = e.x - center.x, dy = e.y - center.y;
    out.push_back({center.x + c * dx - s * dy, center.y + s * dx + c * dy});
  }
  return out;
}

WarpedImage accumulate(std::span<const Point2> points, const Patch& patch) {
  WarpedImage img;
  img.patch = patch;
  img.counts.assign(patch.area(), 0);
  for (const auto& pt : points) {
    const double fx = std::floor(pt.x + 0.5) - patch.x0;
    const double fy = std::floor(pt.y + 0.5) - patch.y0;
    if (fx < 0 || fy < 0 || fx >= patch.width || fy >= patch.height) {
      ++img.dropped;
      continue;
    }
    ++img.counts[std::size_t(fy) * patch.width + std::size_t(fx)];
  }
  return img;
}

Score reward_accumulation(const WarpedImage& image, std::uint32_t h_max) {
  Score sum = 0.0L;
  for (auto h : image.counts) sum += std::exp(static_cast<Score>(std::min(h, h_max)));
  return sum;
}

Score reward_sparsity(const WarpedImage& image, double epsilon, std::uint32_t h_max) {
  if (!(epsilon > 0.0)) throw ConfigError("sparsity epsilon must be > 0");
  Score sum = 0.0L;
  for (auto h : image.counts) sum += 1.0L / (std::exp(static_cast<Score>(std::min(h, h_max))) - 1.0L + epsilon);
  return sum;
}

PreparedBatch::PreparedBatch(std::span<const Event> events, Point2 center, Timestamp t_ref, Patch patch)
    : center_(center), t_ref_(t_ref), patch_(patch) {
  dx_.reserve(events.size());
  dy_.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (i > 0 && e.t != events[i - 1].t) {
      run_end_.push_back(static_cast<std::uint32_t>(i));
    }
    if (i == 0 || e.t != events[i - 1].t) run_dt_s_.push_back((double(e.t) - double(t_ref)) * 1e-6);
    dx_.push_back(e.x - center.x);
    dy_.push_back(e.y - center.y);
  }
  if (!events.empty()) run_end_.push_back(static_cast<std::uint32_t>(events.size()));
}

namespace {

Score evaluate(const PreparedBatch& b, const std::vector<double>& dx, const std::vector<double>& dy,
                const std::vector<double>& run_dt, const std::vector<std::uint32_t>& run_end, double omega, int spin,
                const RewardTable& table, std::vector<std::uint32_t>& counts, std::vector<std::uint32_t>& index) {
  const Patch& p = b.patch();
  const double ox = b.center().x - p.x0 + 0.5;
  const double oy = b.center().y - p.y0 + 0.5;
  const auto w = static_cast<std::uint32_t>(p.width), h = static_cast<std::uint32_t>(p.height);
  constexpr std::uint32_t kOut = std::numeric_limits<std::uint32_t>::max();
  index.resize(dx.size());
  std::size_t begin = 0;
  for (std::size_t r = 0; r < run_end.size(); ++r) {
    const double theta = spin * omega * run_dt[r];
    const double c = std::cos(theta), s = std::sin(theta);
    const std::size_t end = run_end[r];
    for (std::size_t i = begin; i < end; ++i) {
      const double fx = std::floor(ox + c * dx[i] - s * dy[i]);
      const double fy = std::floor(oy + s * dx[i] + c * dy[i]);
      if (fx < 0 || fy < 0 || fx >= w || fy >= h) {
        index[i] = kOut;
        continue;
      }
      const auto pix = static_cast<std::uint32_t>(fy) * w + static_cast<std::uint32_t>(fx);
      index[i] = pix;
      ++counts[pix];
    }
    begin = end;
  }
  Score sum = 0.0L;
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const std::uint32_t pix = index[i];
    if (pix == kOut || counts[pix] == 0) continue;
    sum += table(counts[pix]);
    counts[pix] = 0;
    ++occupied;
  }
  return sum + static_cast<Score>(p.area() - occupied) * table(0);
}

}  // namespace

Score PreparedBatch::objective(double omega, int spin, const RewardTable& table,
                               std::vector<std::uint32_t>& scratch) const {
  if (scratch.size() != patch_.area()) scratch.assign(patch_.area(), 0);
  std::vector<std::uint32_t> index;
  return evaluate(*this, dx_, dy_, run_dt_s_, run_end_, omega, spin, table, scratch, index);
}

Score PreparedBatch::objective(double omega, int spin, const ObjectiveParams& params) const {
  const RewardTable table(params);
  std::vector<std::uint32_t> scratch(patch_.area(), 0);
  return objective(omega, spin, table, scratch);
}

Patch patch_for(std::span<const Event> batch, Point2 center, double margin) {
  return Patch::around(center, max_radius(batch, center) + margin);
}

Score objective(std::span<const Event> batch, Point2 center, Timestamp t_ref, double omega, const Patch& patch,
                const ObjectiveParams& params, int spin) {
  check_params(params);
  const WarpedImage img = accumulate(warp(batch, center, t_ref, omega, spin), patch);
  return params.weight_acc * reward_accumulation(img, params.h_max) +
         params.weight_spa * reward_sparsity(img, params.epsilon, params.h_max);
}

Score objective(std::span<const Event> batch, Point2 center, Timestamp t_ref, double omega,
                const ObjectiveParams& params, int spin) {
  return objective(batch, center, t_ref, omega, patch_for(batch, center), params, spin);
}

std::vector<Score> objective_grid(const PreparedBatch& batch, std::span<const double> omegas, int spin,
                                  const ObjectiveParams& params, Execution exec) {
  const RewardTable table(params);
  std::vector<Score> values(omegas.size());
  const auto n = static_cast<std::int64_t>(omegas.size());
  if (exec == Execution::serial) {
    std::vector<std::uint32_t> counts(batch.patch().area(), 0);
    for (std::int64_t i = 0; i < n; ++i) values[i] = batch.objective(omegas[i], spin, table, counts);
    return values;
  }
#pragma omp parallel
  {
    const RewardTable local(params);
    std::vector<std::uint32_t> counts(batch.patch().area(), 0);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) values[i] = batch.objective(omegas[i], spin, local, counts);
  }
  return values;
}

double SpeedEstimate::rpm() const { return rad_s_to_rpm(omega); }

void validate(const EstimatorConfig& c) {
  if (!(c.bracket_lo_rpm >= 0.0) || !(c.bracket_hi_rpm > c.bracket_lo_rpm))
    throw ConfigError("speed bracket needs 0 <= lo < hi");
  if (c.grid < 3) throw ConfigError("grid needs at least 3 points");
  if (!(c.tol_rpm > 0.0)) throw ConfigError("tolerance must be positive");
  if (c.spin != 1 && c.spin != -1) throw ConfigError("spin must be +1 or -1");
  if (!(c.min_prominence >= 0.0)) throw ConfigError("min_prominence must be nonnegative");
  check_params(c.objective);
}

SpeedEstimate estimate_speed(std::span<const Event> batch, Point2 center, const EstimatorConfig& config,
                             int prop_id) {
  if (batch.empty()) throw NumericalError("cannot estimate speed from an empty batch");
  return estimate_speed(batch, center, batch.front().t, config, prop_id);
}

SpeedEstimate estimate_speed(std::span<const Event> batch, Point2 center, Timestamp t_ref,
                             const EstimatorConfig& config, int prop_id) {
  validate(config);
  if (batch.empty()) throw NumericalError("cannot estimate speed from an empty batch");
  const PreparedBatch prepared(batch, center, t_ref, patch_for(batch, center));

  const double lo = rpm_to_rad_s(config.bracket_lo_rpm), hi = rpm_to_rad_s(config.bracket_hi_rpm);
  const double step = (hi - lo) / (config.grid - 1);
  std::vector<double> omegas(config.grid);
  for (int i = 0; i < config.grid; ++i) omegas[i] = lo + step * i;
  const std::vector<Score> values =
      objective_grid(prepared, omegas, config.spin, config.objective, config.execution);

  const auto best_it = std::max_element(values.begin(), values.end());
  const auto best = static_cast<std::size_t>(best_it - values.begin());
  const Score vmax = *best_it, vmin = *std::min_element(values.begin(), values.end());
  if (vmax - vmin <= std::numeric_limits<double>::epsilon() * std::abs(vmax))
    throw NumericalError("objective is flat over the speed bracket");
  std::vector<Score> sorted = values;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const Score median = sorted[sorted.size() / 2];
  for (auto& v : sorted) v = std::abs(v - median);
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const Score mad = 1.4826L * sorted[sorted.size() / 2];
  if (mad > 0.0 && (vmax - median) < config.min_prominence * mad)
    throw NumericalError("objective has no distinct peak over the speed bracket (degenerate input)");

  SpeedEstimate est;
  est.prop_id = prop_id;
  est.t_ref = t_ref;
  est.n_events = batch.size();
  est.grid_best_omega = omegas[best];
  est.grid_best_objective = vmax;
  est.omega = omegas[best];
  est.objective_value = vmax;

  // Brent on -log R inside the neighbouring grid cells.
  const double a = std::max(lo, omegas[best] - step), b = std::min(hi, omegas[best] + step);
  const RewardTable table(config.objective);
  std::vector<std::uint32_t> scratch(prepared.patch().area(), 0);
  auto neg_log = [&](double w) {
    return -static_cast<double>(std::log(prepared.objective(w, config.spin, table, scratch)));
  };
  const double tol = rpm_to_rad_s(config.tol_rpm);
  const double scale = std::max(std::abs(a), std::abs(b));
  const int bits = std::clamp(static_cast<int>(std::ceil(1.0 - std::log2(tol / scale))), 4,
                              std::numeric_limits<double>::digits / 2);
  std::uintmax_t max_iter = 100;
  const auto [w_star, f_star] = boost::math::tools::brent_find_minima(neg_log, a, b, bits, max_iter);
  const Score r_star = prepared.objective(w_star, config.spin, table, scratch);
  if (r_star > vmax) {
    est.omega = w_star;
    est.objective_value = r_star;
  }
  (void)f_star;
  return est;
}

}  // namespace rotorsense
