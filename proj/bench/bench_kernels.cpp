// Serial reference kernels against their OpenMP builds.
#include "temvip/eif.hpp"
#include "temvip/kernels.hpp"
#include "temvip/rng.hpp"
#include "temvip/sim.hpp"

#include <benchmark/benchmark.h>

using namespace temvip;

namespace {

struct Problem {
  Matrix W;
  Vector d;
  Vector theta;
};

Problem make_problem(Eigen::Index n, Eigen::Index p) {
  RandomStream rng({13});
  Problem pr{Matrix(n, p), Vector(n), Vector()};
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) pr.W(i, j) = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) pr.d[i] = rng.normal();
  pr.theta = kernels::serial::project(pr.W, pr.d);
  return pr;
}

template <bool Parallel>
void BM_project(benchmark::State& state) {
  const Problem pr = make_problem(state.range(0), state.range(1));
  for (auto _ : state) {
    Vector t = Parallel ? kernels::parallel::project(pr.W, pr.d) : kernels::serial::project(pr.W, pr.d);
    benchmark::DoNotOptimize(t.data());
  }
}

template <bool Parallel>
void BM_assemble(benchmark::State& state) {
  const Problem pr = make_problem(state.range(0), state.range(1));
  EifMatrix out;
  for (auto _ : state) {
    if (Parallel)
      kernels::parallel::assemble(pr.W, pr.d, pr.theta, out);
    else
      kernels::serial::assemble(pr.W, pr.d, pr.theta, out);
    benchmark::DoNotOptimize(out.values.data());
  }
}

template <bool Parallel>
void BM_survival_eif(benchmark::State& state) {
  SimScenario s;
  s.kind = ScenarioKind::TteRct;
  s.n = static_cast<std::size_t>(state.range(0));
  s.p = 10;
  const ObservedDataset d = generate(s);
  const TrueNuisances tn = true_nuisances(s, d);
  long hits = 0;
  for (auto _ : state) {
    Vector v = Parallel ? kernels::parallel::survival_eif(*tn.survival, d.treatment, d.survival(), tn.g, 9, true,
                                                          1e-3, hits)
                        : kernels::serial::survival_eif(*tn.survival, d.treatment, d.survival(), tn.g, 9, true,
                                                        1e-3, hits);
    benchmark::DoNotOptimize(v.data());
  }
}

}  // namespace

BENCHMARK(BM_project<false>)->Args({2000, 500})->Args({20000, 100});
BENCHMARK(BM_project<true>)->Args({2000, 500})->Args({20000, 100});
BENCHMARK(BM_assemble<false>)->Args({2000, 500})->Args({20000, 100});
BENCHMARK(BM_assemble<true>)->Args({2000, 500})->Args({20000, 100});
BENCHMARK(BM_survival_eif<false>)->Arg(2000)->Arg(20000);
BENCHMARK(BM_survival_eif<true>)->Arg(2000)->Arg(20000);

BENCHMARK_MAIN();
