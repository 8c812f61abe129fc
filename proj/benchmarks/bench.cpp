#include <benchmark/benchmark.h>

#include "egg/assembly.hpp"
#include "egg/geometry.hpp"

namespace {

egg::SpacePtr make_space(int n) {
  return std::make_shared<egg::ThbSpace>(
      egg::build_thb_space(egg::uniform_mesh(n), 3, 2));
}

void BM_BasisEval(benchmark::State& state) {
  const egg::SpacePtr space = make_space(static_cast<int>(state.range(0)));
  double xi = 0.137, eta = 0.542;
  for (auto _ : state) {
    const int e = space->findElement(xi, eta);
    benchmark::DoNotOptimize(space->evalElementBasis(e, xi, eta, 2));
    xi = xi < 0.9 ? xi + 0.01 : 0.05;
    eta = eta < 0.9 ? eta + 0.013 : 0.07;
  }
}
BENCHMARK(BM_BasisEval)->Arg(8)->Arg(16);

void BM_ResidualAssembly(benchmark::State& state) {
  const egg::SpacePtr space = make_space(static_cast<int>(state.range(0)));
  const egg::QuadratureCache cache = egg::build_quadrature(space);
  const egg::BoundaryData b = egg::make_annulus();
  const egg::GeometryMap x = egg::coons_patch(b, cache);
  const egg::AssemblyOpts opts;
  for (auto _ : state)
    benchmark::DoNotOptimize(egg::residual_F(cache, x, opts));
}
BENCHMARK(BM_ResidualAssembly)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
