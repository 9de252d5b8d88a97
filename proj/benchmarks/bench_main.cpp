#include <benchmark/benchmark.h>

#include "graphdkl/gp.hpp"
#include "graphdkl/graph.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"
#include "graphdkl/svgp.hpp"
#include "graphdkl/synthgen.hpp"

using namespace graphdkl;

namespace {

SvgpHead make_head(std::size_t m, std::size_t s, Rng& rng) {
  RbfKernel kernel;
  return SvgpHead::at_prior(rng.normal_tensor(m, s), kernel, 0.1);
}

std::vector<double> noise_labels(std::size_t n, Rng& rng) {
  std::vector<double> y(n);
  for (double& v : y) v = rng.normal();
  return y;
}

// ELBO value and gradient; cost should grow linearly in N at fixed M.
void BM_ElboGradN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t m = 64, s = 32;
  Rng rng(1);
  const SvgpHead head = make_head(m, s, rng);
  const Tensor z = rng.normal_tensor(n, s);
  const std::vector<double> y = noise_labels(n, rng);
  const std::string prefix = "gp0.";
  const ParamSet params = head.params(prefix);
  for (auto _ : state) {
    Tape tape;
    BoundParams bp(tape, params, true);
    const Var e = elbo(head, bp, prefix, tape.constant(z), y);
    tape.backward(e);
    benchmark::DoNotOptimize(bp.gradients());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ElboGradN)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);

// Quadratic in M at fixed N.
void BM_ElboValueM(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 1000, s = 32;
  Rng rng(2);
  const SvgpHead head = make_head(m, s, rng);
  const Tensor z = rng.normal_tensor(n, s);
  const std::vector<double> y = noise_labels(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(elbo(head, z, y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ElboValueM)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_MeanAggregate(benchmark::State& state) {
  SynthConfig cfg;
  cfg.num_nodes = static_cast<std::size_t>(state.range(0));
  const CausalDataset ds = generate(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(mean_aggregate(ds.x, ds.graph));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.graph.num_edges()));
}
BENCHMARK(BM_MeanAggregate)->Arg(1000)->Arg(4000);

void BM_Cholesky(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor z = rng.normal_tensor(n, 4);
  const Tensor k = kernel_matrix(RbfKernel{}, z, z);
  for (auto _ : state) benchmark::DoNotOptimize(jittered_cholesky(k));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Cholesky)->RangeMultiplier(2)->Range(32, 512)->Complexity(benchmark::oNCubed);

}  // namespace

BENCHMARK_MAIN();
