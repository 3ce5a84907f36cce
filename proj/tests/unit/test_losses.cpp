#include <doctest.h>

#include <cmath>

#include "sketchvid/errors.hpp"
#include "sketchvid/losses.hpp"

using namespace svr;

namespace {

// 1-D embeddings with exact squared distances to the origin anchor.
Tensor emb(double v) { return Tensor{v}; }

}  // namespace

TEST_CASE("triplet loss unit cases") {
  const Tensor a = emb(0.0);
  // ||a-p||^2 = 0.1, ||a-n||^2 = 0.9 -> satisfied margin
  CHECK(triplet_loss_value(a, emb(std::sqrt(0.1)), emb(std::sqrt(0.9)), 0.5) == 0.0);
  // equal distances -> exactly the margin
  CHECK(std::fabs(triplet_loss_value(a, emb(0.6), emb(0.6), 0.5) - 0.5) < 1e-15);
  // 0.5 + 0.3 - 0.5 = 0.3
  CHECK(std::fabs(triplet_loss_value(a, emb(std::sqrt(0.3)), emb(std::sqrt(0.5)), 0.5) - 0.3) <
        1e-12);
}

TEST_CASE("triplet loss on tape matches the value path and differentiates") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor av = Tensor::uniform(Shape{6}, -1, 1, rng);
    Tensor pv = Tensor::uniform(Shape{6}, -1, 1, rng);
    Tensor nv = Tensor::uniform(Shape{6}, -1, 1, rng);
    Tape t;
    Var l = triplet_loss(t, t.input(av), t.input(pv), t.input(nv), 0.5);
    CHECK(std::fabs(t.value(l)[0] - triplet_loss_value(av, pv, nv, 0.5)) < 1e-12);
  }
}

TEST_CASE("triplet loss invariants") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor a = Tensor::uniform(Shape{4}, -2, 2, rng);
    Tensor p = Tensor::uniform(Shape{4}, -2, 2, rng);
    Tensor n = Tensor::uniform(Shape{4}, -2, 2, rng);
    const double margin = 0.5;
    const double fwd = triplet_loss_value(a, p, n, margin);
    const double rev = triplet_loss_value(a, n, p, margin);
    CHECK(fwd >= 0.0);
    // hinge at mirrored arguments: the pair always sums to at least the margin
    CHECK(fwd + rev >= margin - 1e-12);
    const double gap = squared_distance_value(a, n) - squared_distance_value(a, p);
    if (fwd == 0.0) CHECK(gap >= margin - 1e-12);
  }
}

TEST_CASE("relation loss on fixed scores matches the direct formula") {
  Tape t;
  Tensor onehot{1.0, 0.0, 0.0, 0.0, 0.0};
  Var l = t.softmax_cross_entropy(t.input(Tensor{1.0, 0.0, 0.0, 0.0, 0.0}), onehot);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 4.0));
  CHECK(std::fabs(t.value(l)[0] - expected) < 1e-10);
}

TEST_CASE("combined loss") {
  CHECK(combined_loss_value(0.7, 123.0, 0.0) == 0.7);
  CHECK(std::fabs(combined_loss_value(0.5, 1.6094, 0.001) - 0.5016094) < 1e-12);
  CHECK(combined_loss_value(0.0, 0.0, 0.5) == 0.0);
  CHECK_THROWS_AS(combined_loss_value(1.0, 1.0, -0.1), Error);

  // monotone non-decreasing in each argument for lambda1 >= 0
  Rng rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    const double lt = rng.uniform(0, 2), lr = rng.uniform(0, 2), l1 = rng.uniform(0, 1);
    const double d = rng.uniform(0, 1);
    CHECK(combined_loss_value(lt + d, lr, l1) >= combined_loss_value(lt, lr, l1));
    CHECK(combined_loss_value(lt, lr + d, l1) >= combined_loss_value(lt, lr, l1));
  }
}

TEST_CASE("sample_relation_pairs: structure, reproducibility, verification") {
  // 16 triplets over 4 clips; pages match only their own clip's interval
  std::vector<TripletSample> batch;
  for (int i = 0; i < 16; ++i) {
    TripletSample s;
    s.sketch_id = "s" + std::to_string(i % 4);
    s.page_index = 1;
    s.pos_clip = "c" + std::to_string(i % 4);
    s.pos_frame = 5 + i;
    s.neg_clip = "c" + std::to_string((i + 1) % 4);
    s.neg_frame = 3;
    batch.push_back(s);
  }
  // match iff the clip is the sketch's own and the frame is in [1, 100]
  auto is_match = [](const TripletSample& anchor, const std::string& clip, int frame) {
    (void)frame;
    return clip == "c" + anchor.sketch_id.substr(1);
  };

  Rng rng(11);
  RelationBatchPlan plan = sample_relation_pairs(batch, 5, rng, is_match);
  REQUIRE(plan.pairs.size() == 5);
  Tensor oh = plan.one_hot();
  int ones = 0;
  for (double v : oh.values()) ones += v == 1.0 ? 1 : 0;
  CHECK(ones == 1);

  // the true pair is (anchor, own positive); false pairs verified non-matching
  for (size_t i = 0; i < plan.pairs.size(); ++i) {
    const auto& c = plan.pairs[i];
    const TripletSample& anchor = batch[c.anchor_triplet];
    const TripletSample& src = batch[c.atom_triplet];
    const std::string& clip = c.atom == PairAtom::Positive ? src.pos_clip : src.neg_clip;
    const int frame = c.atom == PairAtom::Positive ? src.pos_frame : src.neg_frame;
    if (i == plan.true_index) {
      CHECK(c.anchor_triplet == c.atom_triplet);
      CHECK(c.atom == PairAtom::Positive);
      CHECK(is_match(anchor, clip, frame));
    } else {
      CHECK(!is_match(anchor, clip, frame));
    }
  }

  // distinct false pairs
  for (size_t i = 0; i < plan.pairs.size(); ++i) {
    for (size_t j = i + 1; j < plan.pairs.size(); ++j) {
      const bool same = plan.pairs[i].anchor_triplet == plan.pairs[j].anchor_triplet &&
                        plan.pairs[i].atom == plan.pairs[j].atom &&
                        plan.pairs[i].atom_triplet == plan.pairs[j].atom_triplet;
      CHECK(!same);
    }
  }

  // seeded reproducibility
  Rng rng_a(42), rng_b(42);
  RelationBatchPlan p1 = sample_relation_pairs(batch, 5, rng_a, is_match);
  RelationBatchPlan p2 = sample_relation_pairs(batch, 5, rng_b, is_match);
  CHECK(p1.true_index == p2.true_index);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(p1.pairs[i].anchor_triplet == p2.pairs[i].anchor_triplet);
    CHECK(p1.pairs[i].atom_triplet == p2.pairs[i].atom_triplet);
  }

  // a one-triplet batch cannot supply P-1 = 4 distinct false pairs
  std::vector<TripletSample> tiny(batch.begin(), batch.begin() + 1);
  Rng rng_c(1);
  CHECK_THROWS_WITH_AS(sample_relation_pairs(tiny, 5, rng_c, is_match),
                       doctest::Contains("mini-batch too small"), Error);
}
