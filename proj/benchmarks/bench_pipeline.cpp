#include <benchmark/benchmark.h>

#include "sketchvid/config.hpp"
#include "sketchvid/flow.hpp"
#include "sketchvid/model.hpp"
#include "sketchvid/retrieval.hpp"

using namespace svr;

namespace {

Tensor texture(int n, uint64_t seed) {
  Rng rng(seed);
  Tensor t(Shape{size_t(n), size_t(n)});
  for (auto& v : t.values()) v = rng.uniform();
  // light smoothing so the flow solver has usable gradients
  Tensor out = t;
  for (int y = 1; y + 1 < n; ++y)
    for (int x = 1; x + 1 < n; ++x) {
      out[size_t(y) * size_t(n) + size_t(x)] =
          (t[size_t(y) * size_t(n) + size_t(x)] + t[size_t(y) * size_t(n) + size_t(x - 1)] +
           t[size_t(y) * size_t(n) + size_t(x + 1)] + t[size_t((y - 1)) * size_t(n) + size_t(x)] +
           t[size_t((y + 1)) * size_t(n) + size_t(x)]) /
          5.0;
    }
  return out;
}

}  // namespace

static void BM_Tvl1Flow64(benchmark::State& state) {
  const Tensor a = texture(64, 1);
  Tensor b = a;
  for (size_t y = 0; y < 64; ++y)
    for (size_t x = 1; x < 64; ++x) b[y * 64 + x] = a[y * 64 + x - 1];
  const FlowParams params;
  for (auto _ : state) {
    FlowField f = tvl1_flow(a, b, params);
    benchmark::DoNotOptimize(f.u.data());
  }
}
BENCHMARK(BM_Tvl1Flow64);

static void BM_StreamEmbed(benchmark::State& state) {
  const ModelConfig cfg;
  AppearanceModel m = AppearanceModel::create(cfg, 64, 1);
  Rng rng(2);
  const Tensor frame = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);
  for (auto _ : state) {
    Tensor e = m.cnn.embed_value(frame);
    benchmark::DoNotOptimize(e.data());
  }
}
BENCHMARK(BM_StreamEmbed);

static void BM_SequenceDistance(benchmark::State& state) {
  Rng rng(3);
  EmbeddedQuery q;
  q.sketch_id = "q";
  for (int j = 0; j < 3; ++j) {
    q.appearance.push_back(Tensor::uniform(Shape{256}, -1, 1, rng));
    q.motion.push_back(Tensor::uniform(Shape{256}, -1, 1, rng));
  }
  EmbeddedClip c;
  c.clip_id = "c";
  for (int k = 0; k < 48; ++k) {
    c.appearance.push_back(Tensor::uniform(Shape{256}, -1, 1, rng));
    c.motion.push_back(Tensor::uniform(Shape{256}, -1, 1, rng));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(sequence_distance(q, c, RetrievalMode::Concat));
  }
}
BENCHMARK(BM_SequenceDistance);
