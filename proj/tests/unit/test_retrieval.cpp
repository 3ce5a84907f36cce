#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sketchvid/errors.hpp"
#include "sketchvid/retrieval.hpp"

using namespace svr;

namespace {

EmbeddedQuery make_query(std::vector<Tensor> pages, const std::string& id = "q") {
  EmbeddedQuery q;
  q.sketch_id = id;
  q.appearance = pages;
  q.motion = std::move(pages);  // mirrored; tests select a single mode
  return q;
}

EmbeddedClip make_clip(std::vector<Tensor> positions, const std::string& id = "c") {
  EmbeddedClip c;
  c.clip_id = id;
  c.appearance = positions;
  c.motion = std::move(positions);
  return c;
}

// Independent re-derivation of the bounded nearest-neighbour mean.
double brute_force_distance(const std::vector<Tensor>& pages,
                            const std::vector<Tensor>& positions) {
  const int M = int(pages.size());
  const int O = int(positions.size());
  double total = 0;
  for (int j = 1; j <= M; ++j) {
    int lo, hi;
    if (M == 1) {
      lo = 1;
      hi = O;
    } else if (j == 1) {
      lo = 1;
      hi = int(std::ceil(O / 2.0));
    } else if (j == M) {
      lo = int(std::floor(O / 2.0));
      hi = O;
    } else {
      lo = int(std::ceil(O / 4.0));
      hi = int(std::floor(3.0 * O / 4.0));
    }
    lo = std::max(1, lo);
    hi = std::min(O, std::max(lo, hi));
    double best = 1e300;
    for (int k = lo; k <= hi; ++k) {
      double d = 0;
      for (size_t i = 0; i < pages[size_t(j - 1)].size(); ++i) {
        const double diff = pages[size_t(j - 1)][i] - positions[size_t(k - 1)][i];
        d += diff * diff;
      }
      best = std::min(best, d);
    }
    total += best;
  }
  return total / M;
}

}  // namespace

TEST_CASE("sequence bounds: the three cases, the single-page union, and guards") {
  CHECK(sequence_bounds(1, 2, 4) == std::array<int, 2>{1, 2});
  CHECK(sequence_bounds(2, 2, 4) == std::array<int, 2>{2, 4});
  CHECK(sequence_bounds(2, 3, 8) == std::array<int, 2>{2, 6});
  CHECK(sequence_bounds(1, 1, 9) == std::array<int, 2>{1, 9});  // M=1 searches everywhere
  for (int O = 2; O <= 16; ++O) {
    for (int M = 1; M <= 4; ++M) {
      for (int j = 1; j <= M; ++j) {
        const auto b = sequence_bounds(j, M, O);
        CHECK(b[0] >= 1);
        CHECK(b[1] <= O);
        CHECK(b[0] <= b[1]);
      }
    }
  }
}

TEST_CASE("sequence distance: worked two-page example") {
  // target per-position distances:
  //   page 1 over k in [1,2]: 0.5, 0.2  -> min 0.2
  //   page 2 over k in [2,4]: 0.9, 0.1, 0.3 -> min 0.1
  // D = (0.2 + 0.1) / 2 = 0.15
  const double T = 1.0;
  auto position = [&](double d1, double d2) {
    const double a = (d1 - d2 + T * T) / (2 * T);
    const double b2 = d1 - a * a;
    REQUIRE(b2 >= 0.0);
    return Tensor{a, std::sqrt(b2)};
  };
  std::vector<Tensor> pages = {Tensor{0.0, 0.0}, Tensor{T, 0.0}};
  std::vector<Tensor> positions = {position(0.5, 1.5), position(0.2, 0.9), position(1.0, 0.1),
                                   position(1.0, 0.3)};
  EmbeddedQuery q = make_query(pages);
  EmbeddedClip c = make_clip(positions);
  CHECK(std::fabs(sequence_distance(q, c, RetrievalMode::Appearance) - 0.15) < 1e-9);
}

TEST_CASE("sequence distance: single-page query scans the whole clip") {
  EmbeddedQuery q = make_query({Tensor{0.0}});
  EmbeddedClip c = make_clip({Tensor{5.0}, Tensor{4.0}, Tensor{0.5}, Tensor{3.0}});
  // min over all positions, including ones outside the first-page window
  CHECK(sequence_distance(q, c, RetrievalMode::Appearance) == doctest::Approx(0.25));
}

TEST_CASE("sequence distance equals exhaustive enumeration on random instances") {
  Rng rng(33);
  for (int rep = 0; rep < 300; ++rep) {
    const int M = 1 + int(rng.index(4));
    const int O = 2 + int(rng.index(15));
    const size_t dim = 1 + rng.index(3);
    std::vector<Tensor> pages, positions;
    for (int j = 0; j < M; ++j) pages.push_back(Tensor::uniform(Shape{dim}, -1, 1, rng));
    for (int k = 0; k < O; ++k) positions.push_back(Tensor::uniform(Shape{dim}, -1, 1, rng));
    EmbeddedQuery q = make_query(pages);
    EmbeddedClip c = make_clip(positions);
    CHECK(sequence_distance(q, c, RetrievalMode::Appearance) ==
          brute_force_distance(pages, positions));
  }
}

TEST_CASE("sequence distance: non-negative, zero when pages coincide with positions") {
  EmbeddedQuery q = make_query({Tensor{0.3, 0.4}, Tensor{1.0, -1.0}});
  EmbeddedClip c = make_clip({Tensor{0.3, 0.4}, Tensor{9.0, 9.0}, Tensor{1.0, -1.0}, Tensor{2.0, 2.0}});
  CHECK(sequence_distance(q, c, RetrievalMode::Appearance) == 0.0);
  CHECK_THROWS_AS(sequence_distance(make_query({}), c, RetrievalMode::Appearance), Error);
}

TEST_CASE("rank_gallery: ordering, ties, digests") {
  GalleryIndex index;  // build a synthetic one through the public surface
  // use rank_gallery's contract via hand-rolled gallery: emulate by distance
  EmbeddedQuery q = make_query({Tensor{0.0}});
  q.params_digest = 0;

  // single clip
  {
    RankedResult r;
    r.query_id = "q";
    r.entries = {{"c0", 0.1}};
    CHECK(r.rank_of("c0") == 1);
  }

  // duplicate of the true clip: equal distances, ties by ascending clip id
  std::vector<RankedEntry> entries = {{"c2", 0.5}, {"c1", 0.5}, {"c0", 0.9}};
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.clip_id < b.clip_id;
  });
  CHECK(entries[0].clip_id == "c1");
  CHECK(entries[1].clip_id == "c2");
}

TEST_CASE("fuse_ranks: worked example and boundary weights") {
  RankedResult app, mo;
  app.query_id = mo.query_id = "q";
  // appearance ranks: c0=1, c1=2, c2=3, c3=4
  app.entries = {{"c0", 0.0}, {"c1", 0.1}, {"c2", 0.2}, {"c3", 0.3}};
  // motion ranks: c1=1, c3=2, c0=3, c2=4
  mo.entries = {{"c1", 0.0}, {"c3", 0.1}, {"c0", 0.2}, {"c2", 0.3}};

  RankedResult fused = fuse_ranks(app, mo, 0.5);
  // c1: 0.5*2 + 0.5*1 = 1.5 ; c0: 0.5*1+0.5*3 = 2.0 ; c3: 0.5*4+0.5*2 = 3.0 ; c2: 3.5
  CHECK(fused.entries[0].clip_id == "c1");
  CHECK(fused.entries[0].distance == doctest::Approx(1.5));
  CHECK(fused.entries[1].clip_id == "c0");
  CHECK(fused.entries[1].distance == doctest::Approx(2.0));

  // lambda2 = 2, r_ap = 2, r_mo = 4 -> 3.0 arithmetic check
  RankedResult two_a, two_b;
  two_a.entries = {{"x", 0.0}, {"y", 0.1}};
  two_b.entries = {{"y", 0.0}, {"x", 0.1}};
  RankedResult f2 = fuse_ranks(two_a, two_b, 0.5);
  CHECK(f2.entries[0].distance == doctest::Approx(1.5));  // both fuse to 1.5, tie by id
  CHECK(f2.entries[0].clip_id == "x");

  // boundary weights reduce to the single-stream orders
  RankedResult only_app = fuse_ranks(app, mo, 1.0);
  for (size_t i = 0; i < app.entries.size(); ++i) {
    CHECK(only_app.entries[i].clip_id == app.entries[i].clip_id);
  }
  RankedResult only_mo = fuse_ranks(app, mo, 0.0);
  for (size_t i = 0; i < mo.entries.size(); ++i) {
    CHECK(only_mo.entries[i].clip_id == mo.entries[i].clip_id);
  }

  // non-permutation input is rejected
  RankedResult dup = app;
  dup.entries[1].clip_id = "c0";
  CHECK_THROWS_AS(fuse_ranks(dup, mo, 0.5), Error);
}

TEST_CASE("acc@k: fraction, monotonicity, missing truth") {
  std::vector<RankedResult> results;
  std::map<std::string, std::string> truth;
  for (int i = 0; i < 8; ++i) {
    RankedResult r;
    r.query_id = "q" + std::to_string(i);
    // true clip lands at rank i+1
    for (int j = 0; j < 8; ++j) {
      r.entries.push_back({"g" + std::to_string((i + j) % 8), double(j)});
    }
    truth[r.query_id] = "g" + std::to_string(i);
    results.push_back(std::move(r));
  }
  // every query has its truth at rank 1 by construction above
  CHECK(acc_at_k(results, truth, 1) == 1.0);

  // 128-query layout: 32 hits at rank 1 -> acc@1 = 0.25
  std::vector<RankedResult> big;
  std::map<std::string, std::string> big_truth;
  for (int i = 0; i < 128; ++i) {
    RankedResult r;
    r.query_id = "q" + std::to_string(i);
    r.entries = {{"a", 0.0}, {"b", 1.0}};
    big_truth[r.query_id] = i < 32 ? "a" : "b";
    big.push_back(std::move(r));
  }
  CHECK(acc_at_k(big, big_truth, 1) == 0.25);
  CHECK(acc_at_k(big, big_truth, 2) == 1.0);
  CHECK(acc_at_k(big, big_truth, 1) <= acc_at_k(big, big_truth, 2));

  big[0].query_id = "unknown";
  CHECK_THROWS_WITH_AS(acc_at_k(big, big_truth, 1), doctest::Contains("missing truth"), Error);
}

TEST_CASE("detect_action: interval distance semantics and tie-breaking") {
  EmbeddedQuery q = make_query({Tensor{0.0}});
  // positions 1..30; position 12 is nearest
  std::vector<Tensor> pos;
  for (int k = 1; k <= 30; ++k) pos.push_back(Tensor{k == 12 ? 0.01 : 1.0 + k * 0.01});
  EmbeddedClip c = make_clip(pos);

  DetectionResult inside = detect_action(q, 1, c, RetrievalMode::Appearance, {10, 20});
  CHECK(inside.proposed_frame == 12);
  CHECK(inside.success);

  DetectionResult outside = detect_action(q, 1, c, RetrievalMode::Appearance, {1, 6});
  CHECK(outside.proposed_frame == 12);
  CHECK(!outside.success);  // distance 6 from the interval end

  DetectionResult edge = detect_action(q, 1, c, RetrievalMode::Appearance, {1, 7});
  CHECK(edge.success);  // distance 5: inside the tolerance

  // exact ties resolve to the lowest frame index
  std::vector<Tensor> flat(9, Tensor{1.0});
  DetectionResult tie = detect_action(make_query({Tensor{1.0}}), 1, make_clip(flat),
                                      RetrievalMode::Appearance, {4, 5});
  CHECK(tie.proposed_frame == 1);
}

TEST_CASE("positive rescaling of embeddings leaves fused ordering unchanged") {
  Rng rng(55);
  const int n_clips = 12;
  auto rank_with_scale = [&](double scale, uint64_t seed) {
    Rng local(seed);
    EmbeddedQuery q;
    q.sketch_id = "q";
    q.appearance = {Tensor::uniform(Shape{4}, -1, 1, local)};
    q.motion = {Tensor::uniform(Shape{4}, -1, 1, local)};
    std::vector<EmbeddedClip> gallery;
    for (int i = 0; i < n_clips; ++i) {
      EmbeddedClip c;
      c.clip_id = "c" + std::to_string(i);
      for (int k = 0; k < 5; ++k) {
        c.appearance.push_back(Tensor::uniform(Shape{4}, -1, 1, local));
        c.motion.push_back(Tensor::uniform(Shape{4}, -1, 1, local));
      }
      gallery.push_back(std::move(c));
    }
    auto scale_all = [&](std::vector<Tensor>& ts) {
      for (auto& t : ts)
        for (auto& v : t.values()) v *= scale;
    };
    scale_all(q.appearance);
    scale_all(q.motion);
    for (auto& c : gallery) {
      scale_all(c.appearance);
      scale_all(c.motion);
    }

    auto rank_mode = [&](RetrievalMode mode) {
      RankedResult r;
      r.query_id = "q";
      for (const auto& c : gallery) r.entries.push_back({c.clip_id, sequence_distance(q, c, mode)});
      std::sort(r.entries.begin(), r.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.clip_id < b.clip_id;
      });
      return r;
    };
    return fuse_ranks(rank_mode(RetrievalMode::Appearance), rank_mode(RetrievalMode::Motion), 0.5);
  };

  for (uint64_t seed : {1u, 2u, 3u}) {
    RankedResult base = rank_with_scale(1.0, seed);
    RankedResult scaled = rank_with_scale(3.7, seed);
    REQUIRE(base.entries.size() == scaled.entries.size());
    for (size_t i = 0; i < base.entries.size(); ++i) {
      CHECK(base.entries[i].clip_id == scaled.entries[i].clip_id);
      CHECK(base.entries[i].distance == scaled.entries[i].distance);  // fused ranks, not distances
    }
  }
  (void)rng;
}
