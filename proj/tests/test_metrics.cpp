#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rotorsense/errors.hpp"
#include "rotorsense/metrics.hpp"

using namespace rotorsense;

TEST_CASE("rmae examples") {
  CHECK(rmae(std::vector<double>{3000, 3030}, std::vector<double>{3000, 3000}) == doctest::Approx(0.5));
  CHECK(rmae(std::vector<double>{2970}, std::vector<double>{3000}) == doctest::Approx(1.0));
  CHECK(rmae(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK_THROWS_AS(rmae(std::vector<double>{1}, std::vector<double>{0}), DataError);
  CHECK_THROWS_AS(rmae(std::vector<double>{}, std::vector<double>{}), DataError);
  CHECK_THROWS_AS(rmae(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
}

TEST_CASE("localization error examples") {
  std::vector<TimedPosition> truth, same, up;
  for (int i = 0; i < 20; ++i) {
    const Vec3 p{0.1 * i, -0.3 * i, 10.0 + i};
    truth.push_back({Timestamp(i) * 1000, p});
    same.push_back({Timestamp(i) * 1000, p});
    up.push_back({Timestamp(i) * 1000, {p[0], p[1], p[2] + 1.0}});
  }
  const auto z = localization_error(same, truth, 0);
  CHECK(z.mean == 0.0);
  CHECK(z.pairs == 20);
  const auto one = localization_error(up, truth, 0);
  CHECK(one.mean == doctest::Approx(1.0));
  for (double c : one.cdf) CHECK(c == doctest::Approx(1.0));

  // nothing within tolerance
  std::vector<TimedPosition> far{{500, {0, 0, 10}}};
  CHECK_THROWS_AS(localization_error(far, truth, 100), DataError);
  CHECK(localization_error(far, truth, 500).pairs == 1);
}

TEST_CASE("localization error agrees with a brute-force pairing") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<TimedPosition> truth, est;
    for (int i = 0; i < 300; ++i) truth.push_back({Timestamp(i) * 1000 + rng() % 7, {u(rng), u(rng), u(rng)}});
    std::shuffle(truth.begin(), truth.end(), rng);
    for (int i = 0; i < 120; ++i) est.push_back({Timestamp(rng() % 310000), {u(rng), u(rng), u(rng)}});
    const Timestamp tol = 300;
    // every estimate against every truth sample; ties go to the later sample
    std::vector<double> errs;
    for (const auto& e : est) {
      const TimedPosition* best = nullptr;
      Timestamp gap = 0;
      for (const auto& t : truth) {
        const Timestamp g = e.t > t.t ? e.t - t.t : t.t - e.t;
        if (!best || g < gap || (g == gap && t.t > best->t)) best = &t, gap = g;
      }
      if (gap > tol) continue;
      errs.push_back(std::hypot(e.position[0] - best->position[0], e.position[1] - best->position[1],
                                e.position[2] - best->position[2]));
    }
    const auto got = localization_error(est, truth, tol);
    REQUIRE(got.pairs == errs.size());
    double mean = 0;
    for (double v : errs) mean += v;
    mean /= double(errs.size());
    CHECK(got.mean == doctest::Approx(mean).epsilon(1e-12));
    std::sort(errs.begin(), errs.end());
    CHECK(got.cdf.back() == doctest::Approx(errs.back()).epsilon(1e-12));
    // nearest rank: the 50% entry is the ceil(n / 2)-th smallest
    CHECK(got.cdf[4] == doctest::Approx(errs[(errs.size() + 1) / 2 - 1]).epsilon(1e-12));
  }
}
