#include <benchmark/benchmark.h>

#include <random>

#include "sbd/attention.hpp"
#include "sbd/ops.hpp"
#include "sbd/pipeline.hpp"
#include "sbd/rpn.hpp"
#include "sbd/unet.hpp"

namespace {

using namespace sbd;

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  Tensor t(std::move(shape), 0.0f, requires_grad);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = random_tensor({1, c, 32, 48, 32}, 1);
  const Tensor w = random_tensor({c, c, 3, 3, 3}, 2);
  const Tensor b = random_tensor({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv3dForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = random_tensor({1, c, 32, 48, 32}, 1, true);
  const Tensor w = random_tensor({c, c, 3, 3, 3}, 2, true);
  const Tensor b = random_tensor({c}, 3, true);
  for (auto _ : state) {
    backward(ops::sum(ops::conv3d(x, w, b, 1, 1)));
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv3dBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RpnForward(benchmark::State& state) {
  const RpnModel model(RpnConfig{}, 1);
  const Tensor slice = random_tensor({1, 1, 48, 32}, 4);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(slice));
}
BENCHMARK(BM_RpnForward)->Unit(benchmark::kMicrosecond);

void BM_RpnTrainStep(benchmark::State& state) {
  const PipelineConfig cfg;
  RpnTrainer trainer(cfg.rpn, cfg.rpn_train, cfg.seed);
  const auto seed = dataset_seeds(cfg.seed, 1)[0];
  const Phantom p = gen_phantom(seed, cfg.data.dims, cfg.data.phantom);
  const int z = cfg.data.dims.d / 2;
  const std::vector<RpnExample> ex{make_rpn_example(trainer.model(), p.image, z, p.gt_boxes[z])};
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(ex));
}
BENCHMARK(BM_RpnTrainStep)->Unit(benchmark::kMicrosecond);

void BM_UNetTrainStep(benchmark::State& state) {
  const PipelineConfig cfg;
  const auto seed = dataset_seeds(cfg.seed, 1)[0];
  const Phantom p = gen_phantom(seed, cfg.data.dims, cfg.data.phantom);
  const std::vector<SegExample> ex{{seg_input(p.image, build_3d_mask(p.labels)), p.labels}};
  SegTrainer trainer(unet_config_for(cfg, Method::kMask3d), cfg.seg.adam, cfg.seed);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(ex));
}
BENCHMARK(BM_UNetTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
