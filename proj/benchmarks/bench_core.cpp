#include <benchmark/benchmark.h>

#include "sketchvid/rng.hpp"
#include "sketchvid/tape.hpp"

using namespace svr;

static void BM_Conv2dForward64(benchmark::State& state) {
  Rng rng(1);
  Tensor in = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);
  Tensor f = Tensor::uniform(Shape{16, 3, 3, 3}, -0.2, 0.2, rng);
  for (auto _ : state) {
    Tensor out = kernels::conv2d(in, f, 2, 1);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Conv2dForward64);

static void BM_Conv2dTrainStep(benchmark::State& state) {
  Rng rng(2);
  Parameter f("f", Tensor::uniform(Shape{16, 3, 3, 3}, -0.2, 0.2, rng));
  Tensor in = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);
  for (auto _ : state) {
    Tape t;
    Var y = t.relu(t.conv2d(t.input(in), t.param(f), 2, 1));
    t.backward(t.sum_squares(t.global_avg_pool(y)));
    benchmark::DoNotOptimize(f.grad.data());
    f.zero_grad();
  }
}
BENCHMARK(BM_Conv2dTrainStep);
