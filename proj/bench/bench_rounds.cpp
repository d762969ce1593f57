#include <benchmark/benchmark.h>

#include "cpsgd/run.hpp"

namespace {

using namespace cpsgd;

struct Fixture {
  Topology topology;
  std::shared_ptr<QuadraticProblem> problem;
  NoisyOracle oracle;
  CompressorSpec compressor;
  Stack x0;

  Fixture(int n, int d)
      : topology(Topology::ring_with_chords(n)),
        problem(make_quadratic_problem(n, d, QuadraticSpec{}, 7)),
        oracle(problem, 0.5, 11),
        compressor(CompressorSpec::top_k(std::max(1, d / 4), d)),
        x0(uniform_initial_iterates(n, d, 0.0, 1.0, 3)) {}
};

const StepParams kParams{0.01, 2.0, 0.5, 0.2};

void BM_cp_sgd_parallel(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  SwarmState s = SwarmState::initial(f.x0);
  for (auto _ : state) benchmark::DoNotOptimize(cp_sgd_round(s, f.topology, f.compressor, f.oracle, kParams, 5));
}

void BM_cp_sgd_reference(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  SwarmState s = SwarmState::initial(f.x0);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::cp_sgd_round(s, f.topology, f.compressor, f.oracle, kParams, 5));
}

void BM_choco_parallel(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const Mat w = metropolis_weights(f.topology);
  SwarmState s = SwarmState::initial(f.x0);
  for (auto _ : state) benchmark::DoNotOptimize(choco_sgd_round(s, w, f.compressor, f.oracle, 0.2, 0.01, 5));
}

void BM_choco_reference(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const Mat w = metropolis_weights(f.topology);
  SwarmState s = SwarmState::initial(f.x0);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::choco_sgd_round(s, w, f.compressor, f.oracle, 0.2, 0.01, 5));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int n : {16, 64, 256}) b->Args({n, 32});
}

BENCHMARK(BM_cp_sgd_parallel)->Apply(sizes);
BENCHMARK(BM_cp_sgd_reference)->Apply(sizes);
BENCHMARK(BM_choco_parallel)->Apply(sizes);
BENCHMARK(BM_choco_reference)->Apply(sizes);

}  // namespace

BENCHMARK_MAIN();
