#include <random>

#include <benchmark/benchmark.h>

#include "compose3d/composition.hpp"
#include "compose3d/denoiser.hpp"
#include "compose3d/renderer.hpp"
#include "compose3d/sds.hpp"

using namespace compose3d;

namespace {

VoxelGrid noisy_grid(int n) {
  VoxelGrid grid = initial_grid(n);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : grid.density()) v = normal(rng);
  for (auto& v : grid.color()) v = normal(rng);
  return grid;
}

CameraPose bench_pose() {
  CameraPose pose;
  pose.azimuth = 0.6;
  pose.elevation = 0.3;
  return pose;
}

void BM_Render(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const VoxelGrid grid = noisy_grid(n);
  RenderOptions opts;
  opts.step_size = 2.0 / n;
  opts.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(render(grid, bench_pose(), opts));
  state.SetItemsProcessed(state.iterations() * opts.width * opts.height);
}
BENCHMARK(BM_Render)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const VoxelGrid grid = noisy_grid(n);
  RenderOptions opts;
  opts.step_size = 2.0 / n;
  opts.threads = 1;
  const ImageTensor d_rgb(opts.height, opts.width, 3, 1.0);
  GridGradient grad(grid);
  for (auto _ : state) {
    grad.zero();
    render_backward(grid, bench_pose(), opts, d_rgb, grad);
  }
  state.SetItemsProcessed(state.iterations() * opts.width * opts.height);
}
BENCHMARK(BM_RenderBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DenoiseBatch(benchmark::State& state) {
  const int prompts = static_cast<int>(state.range(0));
  const auto sched = build_schedule();
  PointMassPrior prior(sched, 64, 64, 3);
  std::vector<ConditionId> conds;
  for (int i = 0; i <= prompts; ++i) {
    prior.set_target({i}, ImageTensor(64, 64, 3, 0.1 * i));
    conds.push_back({i});
  }
  std::mt19937_64 rng(3);
  const ImageTensor x = gaussian_image(64, 64, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(prior.denoise_batch(x, 500, conds));
}
BENCHMARK(BM_DenoiseBatch)->Arg(1)->Arg(4);

void BM_SdsStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto sched = build_schedule();
  PointMassPrior prior(sched, 64, 64, 3);
  const double gray[3] = {0.5, 0.5, 0.5};
  const double red[3] = {1.0, 0.0, 0.0};
  const double blue[3] = {0.0, 0.0, 1.0};
  prior.set_target({0}, constant_image(64, 64, gray));
  prior.set_target({1}, constant_image(64, 64, red));
  prior.set_target({2}, constant_image(64, 64, blue));

  SceneLayout layout;
  layout.prompt_count = 2;
  layout.background_prompt = 2;
  layout.boxes.push_back({Vec3(-0.3, -0.3, -0.3), Vec3(0.3, 0.3, 0.3), 1, 0.3});
  PromptSet prompts;
  prompts.prompts = {{1}, {2}};
  prompts.guidance = 100.0;

  SdsConfig config;
  config.render.step_size = 2.0 / n;
  config.render.threads = 1;
  config.resolve(sched);
  const VoxelGrid grid = noisy_grid(n);
  GridGradient grad(grid);
  std::mt19937_64 rng(11);
  for (auto _ : state) {
    grad.zero();
    benchmark::DoNotOptimize(
        sds_step(grid, layout, prompts, prior, sched, config, rng, grad, 1.0));
  }
}
BENCHMARK(BM_SdsStep)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
