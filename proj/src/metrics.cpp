#include "rotorsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rotorsense/errors.hpp"

namespace rotorsense {

double rmae(std::span<const double> est, std::span<const double> truth) {
  if (est.size() != truth.size()) throw DataError("rmae: estimate and truth lengths differ");
  if (est.empty()) throw DataError("rmae: no pairs");
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!(truth[i] > 0.0)) throw DataError("rmae: truth value " + std::to_string(truth[i]) + " is not positive");
    sum += std::abs(est[i] - truth[i]) / truth[i];
  }
  return 100.0 * sum / double(est.size());
}

LocalizationError localization_error(std::span<const TimedPosition> est, std::span<const TimedPosition> truth,
                                     Timestamp tolerance_us) {
  std::vector<TimedPosition> ref(truth.begin(), truth.end());
  std::stable_sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  std::vector<double> errors;
  errors.reserve(est.size());
  for (const auto& e : est) {
    auto it = std::lower_bound(ref.begin(), ref.end(), e.t, [](const TimedPosition& p, Timestamp t) { return p.t < t; });
    const TimedPosition* best = nullptr;
    Timestamp gap = 0;
    if (it != ref.end()) {
      best = &*it;
      gap = it->t - e.t;
    }
    if (it != ref.begin()) {
      const auto prev = std::prev(it);
      if (!best || e.t - prev->t < gap) {
        best = &*prev;
        gap = e.t - prev->t;
      }
    }
    if (!best || gap > tolerance_us) continue;
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) d2 += (e.position[k] - best->position[k]) * (e.position[k] - best->position[k]);
    errors.push_back(std::sqrt(d2));
  }
  if (errors.empty()) throw DataError("localization error: no estimate aligns with the truth series");
  LocalizationError out;
  out.pairs = errors.size();
  double sum = 0.0;
  for (double v : errors) sum += v;
  out.mean = sum / double(errors.size());
  std::sort(errors.begin(), errors.end());
  for (std::size_t q = 0; q < out.cdf.size(); ++q) {
    const double p = double(q + 1) / double(out.cdf.size());
    const auto rank = static_cast<std::size_t>(std::ceil(p * double(errors.size()) - 1e-9));
    out.cdf[q] = errors[std::max<std::size_t>(rank, 1) - 1];
  }
  return out;
}

}  // namespace rotorsense
