// Serial reference paths against their OpenMP counterparts. Run with
// OMP_NUM_THREADS set to compare thread counts.
#include <benchmark/benchmark.h>

#include "vmv/grid_kernel.hpp"
#include "vmv/volterra.hpp"

namespace {

vmv::Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? vmv::Exec::serial : vmv::Exec::parallel;
}

void BM_GridWeights(benchmark::State& state) {
  const vmv::TimeGrid grid(1.0, static_cast<std::size_t>(state.range(1)));
  const auto k = vmv::Kernel::fbm(0.7);
  for (auto _ : state) benchmark::DoNotOptimize(vmv::GridKernel::from_kernel(k, grid, exec_of(state)));
}
BENCHMARK(BM_GridWeights)->ArgsProduct({{0, 1}, {100}})->Unit(benchmark::kMillisecond);

void BM_Convolve(benchmark::State& state) {
  const vmv::TimeGrid grid(1.0, static_cast<std::size_t>(state.range(1)));
  const auto w = vmv::GridKernel::from_kernel(vmv::Kernel::power(0.75), grid);
  for (auto _ : state) benchmark::DoNotOptimize(vmv::convolve(w, w, exec_of(state)));
}
BENCHMARK(BM_Convolve)->ArgsProduct({{0, 1}, {500, 1000}})->Unit(benchmark::kMillisecond);

void BM_ResolventDirect(benchmark::State& state) {
  const vmv::TimeGrid grid(1.0, static_cast<std::size_t>(state.range(1)));
  const auto w = vmv::GridKernel::from_kernel(vmv::Kernel::constant(1.0), grid);
  for (auto _ : state) benchmark::DoNotOptimize(vmv::resolvent_direct(w, exec_of(state)));
}
BENCHMARK(BM_ResolventDirect)->ArgsProduct({{0, 1}, {1000, 2000}})->Unit(benchmark::kMillisecond);

void BM_SimulateParticles(benchmark::State& state) {
  const vmv::TimeGrid grid(1.0, 100);
  const auto w1 = vmv::GridKernel::from_kernel(vmv::Kernel::constant(1.0), grid);
  const auto w2 = vmv::GridKernel::from_kernel(vmv::Kernel::power(0.75), grid);
  const auto coeffs = vmv::linear_mean_field(vmv::LinearMeanFieldParams::scalar(1.0, 0.5, 1.0, 0.2));
  vmv::SimulationOptions opt;
  opt.exec = exec_of(state);
  const auto n = static_cast<std::size_t>(state.range(1));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        vmv::simulate_particles(w1, w2, coeffs, vmv::InitialCondition::point({1.0}), 0.1, n, 7, opt));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_SimulateParticles)->ArgsProduct({{0, 1}, {1000, 10000}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
