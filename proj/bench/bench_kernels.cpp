#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "aerosdf/autodiff/kernels.hpp"
#include "aerosdf/common/parallel.hpp"
#include "aerosdf/datagen.hpp"
#include "aerosdf/sdf.hpp"

using namespace aerosdf;
namespace k = aerosdf::ad::kernels;

namespace {

struct ConvProblem {
  k::ConvGeometry g;
  std::vector<float> x, w, b, y, dy, dx, dw, db;
};

// Encoder-sized layer: batch 16, 8 -> 16 channels, 32 x 8 x 8, dilation 2.
ConvProblem make_problem() {
  ConvProblem p;
  p.g = k::make_conv_geometry({16, 8, 32, 8, 8}, {16, 8, 3, 3, 3}, 1, 2, 2);
  std::mt19937 rng(1);
  std::normal_distribution<float> n(0.0f, 1.0f);
  auto fill = [&](std::vector<float>& v, std::size_t size) {
    v.resize(size);
    for (auto& e : v) e = n(rng);
  };
  const auto& g = p.g;
  fill(p.x, g.n * g.c * g.in_spatial());
  fill(p.w, g.f * g.c * g.kernel_volume());
  fill(p.b, g.f);
  fill(p.dy, g.n * g.f * g.out_spatial());
  p.y.resize(p.dy.size());
  p.dx.resize(p.x.size());
  p.dw.resize(p.w.size());
  p.db.resize(p.b.size());
  return p;
}

int workers(const benchmark::State& state) {
  return state.range(0) == 0 ? parallel::max_workers() : static_cast<int>(state.range(0));
}

void BM_ConvForwardReference(benchmark::State& state) {
  auto p = make_problem();
  for (auto _ : state) {
    k::reference::conv3d_forward(p.g, p.x.data(), p.w.data(), p.b.data(), p.y.data());
    benchmark::DoNotOptimize(p.y.data());
  }
}

void BM_ConvForwardParallel(benchmark::State& state) {
  auto p = make_problem();
  parallel::WorkerScope scope(workers(state));
  for (auto _ : state) {
    k::conv3d_forward(p.g, p.x.data(), p.w.data(), p.b.data(), p.y.data());
    benchmark::DoNotOptimize(p.y.data());
  }
}

void BM_ConvBackwardReference(benchmark::State& state) {
  auto p = make_problem();
  for (auto _ : state) {
    k::reference::conv3d_backward_input(p.g, p.w.data(), p.dy.data(), p.dx.data());
    k::reference::conv3d_backward_weight(p.g, p.x.data(), p.dy.data(), p.dw.data(), p.db.data());
    benchmark::DoNotOptimize(p.dx.data());
  }
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  auto p = make_problem();
  parallel::WorkerScope scope(workers(state));
  for (auto _ : state) {
    k::conv3d_backward_input(p.g, p.w.data(), p.dy.data(), p.dx.data());
    k::conv3d_backward_weight(p.g, p.x.data(), p.dy.data(), p.dw.data(), p.db.data());
    benchmark::DoNotOptimize(p.dx.data());
  }
}

void BM_GenerateSdf(benchmark::State& state) {
  datagen::ShapeParams params;
  params.alpha_deg = 20.0;
  params.beta_deg = 15.0;
  const auto mesh = datagen::build_shape_mesh(params);
  const auto grid = datagen::default_grid();
  parallel::WorkerScope scope(workers(state));
  for (auto _ : state) benchmark::DoNotOptimize(sdf::generate_sdf(mesh, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.cell_count()));
}

}  // namespace

// Argument: worker count, 0 for all available cores.
BENCHMARK(BM_ConvForwardReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardParallel)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParallel)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateSdf)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
