#include "rotorsense/tracking.hpp"

#include <algorithm>
#include <cmath>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/errors.hpp"

namespace rotorsense {

int detect_spin(std::span<const Event> batch, Point2 center, const EstimatorConfig& config) {
  validate(config);
  if (batch.empty()) throw NumericalError("cannot detect spin on an empty batch");
  const PreparedBatch prepared(batch, center, batch.front().t, patch_for(batch, center));
  const double lo = rpm_to_rad_s(config.bracket_lo_rpm), hi = rpm_to_rad_s(config.bracket_hi_rpm);
  std::vector<double> omegas(config.grid);
  for (int i = 0; i < config.grid; ++i) omegas[i] = lo + (hi - lo) * i / (config.grid - 1);
  Score best[2];
  for (int k = 0; k < 2; ++k) {
    const auto v = objective_grid(prepared, omegas, k == 0 ? 1 : -1, config.objective, config.execution);
    best[k] = *std::max_element(v.begin(), v.end());
  }
  return best[1] > best[0] ? -1 : 1;
}

TrackingResult estimate_track(std::span<const Event> events, Point2 center, const TrackingOptions& opt, int prop_id,
                              std::optional<Timestamp> origin) {
  validate(opt.policy);
  validate(opt.estimator);
  if (!(opt.prior_span > 0.0 && opt.prior_span < 1.0)) throw ConfigError("prior span must be in (0, 1)");
  if (!(opt.target_rotation_rad >= 0.0)) throw ConfigError("target rotation must be nonnegative");
  TrackingResult out;
  out.spin = opt.estimator.spin;
  if (events.empty()) return out;

  const std::vector<EventBundle> bundles = slice_bundles(events, opt.policy.dt_us, origin);
  const double dt_s = double(opt.policy.dt_us) * 1e-6;
  auto bundle_limit = [&](double omega) {
    if (opt.target_rotation_rad <= 0.0 || !(omega > 0.0)) return opt.policy.beta;
    const double need = std::ceil(opt.target_rotation_rad / (omega * dt_s) - 1e-9);
    return std::max(opt.policy.beta, static_cast<int>(std::min(need, 1e6)));
  };

  EstimatorConfig cfg = opt.estimator;
  std::optional<double> prior;
  std::size_t next = 0, batch_no = 0;
  while (next < bundles.size()) {
    const std::span<const EventBundle> rest(bundles.data() + next, bundles.size() - next);
    BatchPolicy policy = opt.policy;
    GrowResult grown;
    if (prior) {
      policy.beta = bundle_limit(*prior);
      grown = grow_batch(rest, policy, *prior, center, cfg.objective, out.spin);
    } else {
      // No speed yet: a fixed-length batch sized for the bracket midpoint.
      const double mid = rpm_to_rad_s(0.5 * (cfg.bracket_lo_rpm + cfg.bracket_hi_rpm));
      const std::size_t n = std::min<std::size_t>(rest.size(), std::size_t(bundle_limit(mid)));
      for (std::size_t b = 0; b < n; ++b) grown.batch.append(rest[b]);
      grown.reason = n == rest.size() ? StopReason::stream_end : StopReason::bundle_limit;
    }
    next += grown.batch.n_bundles();
    const std::uint64_t batch_seed = opt.seed + batch_no++;

    std::vector<Event> batch = grown.batch.flatten();
    if (batch.empty()) {
      ++out.skipped;
      continue;
    }
    const std::size_t n_full = batch.size();
    const Timestamp t_ref = grown.batch.t_start();
    if (opt.policy.sample_fraction < 1.0) batch = density_downsample(batch, opt.policy, batch_seed);
    if (!prior && opt.auto_spin) {
      try {
        out.spin = detect_spin(batch, center, cfg);
      } catch (const NumericalError&) {
        ++out.skipped;
        continue;
      }
    }
    cfg.spin = out.spin;
    try {
      SpeedEstimate est = estimate_speed(batch, center, t_ref, cfg, prop_id);
      out.batches.push_back({est, grown.reason, grown.batch.n_bundles(), n_full, grown.batch.t_end()});
      prior = est.omega;
      cfg.bracket_lo_rpm = est.rpm() * (1.0 - opt.prior_span);
      cfg.bracket_hi_rpm = est.rpm() * (1.0 + opt.prior_span);
    } catch (const NumericalError&) {
      ++out.skipped;
    }
  }
  return out;
}

}  // namespace rotorsense
