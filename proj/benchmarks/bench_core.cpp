#include <benchmark/benchmark.h>

#include <random>

#include "hybridreg/deformable.hpp"
#include "hybridreg/metrics.hpp"
#include "hybridreg/mind.hpp"
#include "hybridreg/phantom.hpp"
#include "hybridreg/resample.hpp"
#include "hybridreg/rigid.hpp"

using namespace hybridreg;

namespace {

const PhantomPair& phantom() {
  static const PhantomPair p = make_phantom(PhantomSpec{});
  return p;
}

void BM_MindDescriptor(benchmark::State& state) {
  const Volume& v = phantom().fixed;
  for (auto _ : state) benchmark::DoNotOptimize(mind_descriptor(v));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.size()));
}
BENCHMARK(BM_MindDescriptor)->Unit(benchmark::kMillisecond);

void BM_WarpScalar(benchmark::State& state) {
  const PhantomPair& p = phantom();
  const DisplacementField f = gt_hybrid_field(p);
  for (auto _ : state) benchmark::DoNotOptimize(warp_scalar(p.moving, f));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.moving.size()));
}
BENCHMARK(BM_WarpScalar)->Unit(benchmark::kMillisecond);

void BM_ObjectiveGradient(benchmark::State& state) {
  const PhantomPair& p = phantom();
  const DescriptorVolume fd = mind_descriptor(p.fixed), md = mind_descriptor(p.moving);
  ControlGrid g = ControlGrid::covering(p.fixed.grid(), static_cast<double>(state.range(0)));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : g.values) v = u(rng);
  const DisplacementField rigid(p.fixed.grid());
  for (auto _ : state) benchmark::DoNotOptimize(objective_gradient(fd, md, g, rigid, 0.2));
}
BENCHMARK(BM_ObjectiveGradient)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_EstimateRigid(benchmark::State& state) {
  const PhantomPair& p = phantom();
  const DescriptorVolume fd = mind_descriptor(p.fixed), md = mind_descriptor(p.moving);
  const LabelVolume mask = select_label(p.fixed_labels, 2);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_rigid(fd, md, mask, {}, 2));
}
BENCHMARK(BM_EstimateRigid)->Unit(benchmark::kMillisecond);

void BM_Hd95(benchmark::State& state) {
  const PhantomPair& p = phantom();
  const LabelVolume a = binary_mask(p.fixed_labels, 1), b = binary_mask(p.moving_labels, 1);
  for (auto _ : state) benchmark::DoNotOptimize(hd95(a, b, p.fixed.grid().spacing));
}
BENCHMARK(BM_Hd95)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
