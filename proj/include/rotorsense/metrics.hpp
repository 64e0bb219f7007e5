#pragma once

#include <array>
#include <span>
#include <vector>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/event_core.hpp"

namespace rotorsense {

// Relative mean absolute error in percent. Throws DataError on length
// mismatch, empty input or a truth value <= 0.
double rmae(std::span<const double> estimates, std::span<const double> truth);

struct TimedPosition {
  Timestamp t = 0;
  Vec3 position{};
};

struct LocalizationError {
  double mean = 0.0;  // m
  std::size_t pairs = 0;
  // Error at the 10%, 20%, ..., 100% quantiles (nearest rank).
  std::array<double, 10> cdf{};
};

// Pairs each estimate with the truth sample nearest in time, skipping pairs
// further apart than tolerance_us. Throws DataError when nothing pairs up.
LocalizationError localization_error(std::span<const TimedPosition> estimate, std::span<const TimedPosition> truth,
                                     Timestamp tolerance_us);

}  // namespace rotorsense
