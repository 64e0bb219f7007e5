// Serial reference vs OpenMP versions of the two hot kernels.

#include <benchmark/benchmark.h>

#include "rotorsense/adaptive_batch.hpp"
#include "rotorsense/motion_comp.hpp"
#include "rotorsense/propeller_sim.hpp"

using namespace rotorsense;

namespace {

constexpr Point2 kCenter{320.0, 240.0};

// 12 ms of a 3000 RPM rotor with light background noise.
const std::vector<Event>& batch() {
  static const std::vector<Event> events = [] {
    PropellerSpec p;
    p.center_x = kCenter.x;
    p.center_y = kCenter.y;
    p.speed = SpeedProfile::constant(3000);
    NoiseSpec noise;
    noise.background_rate = 1.0;
    const std::vector<PropellerSpec> specs{p};
    return simulate_propellers(specs, noise, {640, 480}, 12000, max_tick_for(specs), 1).stream.events;
  }();
  return events;
}

void objective_grid_bench(benchmark::State& state, Execution exec) {
  const auto& ev = batch();
  const PreparedBatch pb(ev, kCenter, ev.front().t, patch_for(ev, kCenter));
  std::vector<double> omegas(64);
  for (std::size_t i = 0; i < omegas.size(); ++i) omegas[i] = 150.0 + 5.0 * double(i);
  for (auto _ : state) benchmark::DoNotOptimize(objective_grid(pb, omegas, 1, {}, exec));
  state.SetItemsProcessed(state.iterations() * std::int64_t(ev.size() * omegas.size()));
}

void local_density_bench(benchmark::State& state, Execution exec) {
  const auto& ev = batch();
  for (auto _ : state) benchmark::DoNotOptimize(local_density(ev, 2.0, 100.0, exec));
  state.SetItemsProcessed(state.iterations() * std::int64_t(ev.size()));
}

}  // namespace

BENCHMARK_CAPTURE(objective_grid_bench, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(objective_grid_bench, parallel, Execution::parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_CAPTURE(local_density_bench, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(local_density_bench, parallel, Execution::parallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
