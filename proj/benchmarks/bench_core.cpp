#include <benchmark/benchmark.h>

#include <random>

#include "voxelsr/inference.hpp"
#include "voxelsr/metrics.hpp"
#include "voxelsr/model.hpp"
#include "voxelsr/ops.hpp"
#include "voxelsr/phantom.hpp"
#include "voxelsr/training.hpp"

using namespace voxelsr;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.f, 1.f);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(shape, std::move(v));
}

Volume phantom(Dims d, double sigma = 0.0) {
  PhantomSpec spec;
  spec.dims = d;
  if (sigma > 0) spec.noise_sigma = {sigma};
  return make_phantom(spec);
}

void BM_Conv3d(benchmark::State& state) {
  const auto c = state.range(0);
  const auto in = random_tensor({1, c, 6, 16, 16}, 1);
  const auto k = random_tensor({c, c, 3, 3, 3}, 2);
  const auto b = random_tensor({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d(in, k, b, {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * in.numel());
}
BENCHMARK(BM_Conv3d)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Linear(benchmark::State& state) {
  const auto rows = state.range(0);
  const auto x = random_tensor({rows, 67}, 1);
  const auto w = random_tensor({64, 67}, 2);
  const auto b = random_tensor({64}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::linear(x, w, b));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_Linear)->Arg(1024)->Arg(8192)->Unit(benchmark::kMicrosecond);

void BM_Forward(benchmark::State& state) {
  const auto params = ModelParams<float>::init(ModelConfig::desk(), 1);
  const auto v = phantom({16, 16, 6});
  const auto grid = hr_grid_coords(v.dims(), static_cast<double>(state.range(0)));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(forward(v, grid.coords, params));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.coords.size()));
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.model = ModelConfig::desk();
  cfg.patch_lr = {16, 16, 6};
  cfg.epochs = 1;
  cfg.steps_per_epoch = 1;
  cfg.lambda = state.range(0) ? 1.0 : 0.0;
  const std::vector<Volume> data{phantom({32, 32, 32})};
  for (auto _ : state) benchmark::DoNotOptimize(train(data, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto a = phantom({64, 64, 16}, 0.02), b = phantom({64, 64, 16}, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

void BM_Snli(benchmark::State& state) {
  const auto v = phantom({64, 64, 16}, 0.03);
  for (auto _ : state) benchmark::DoNotOptimize(snli(v));
}
BENCHMARK(BM_Snli)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
