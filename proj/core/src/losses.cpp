#include "sketchvid/losses.hpp"

#include <algorithm>

#include "sketchvid/errors.hpp"

namespace svr {

double squared_distance_value(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw data_error("squared distance over mismatched shapes: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double triplet_loss_value(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                          double margin) {
  const double dp = squared_distance_value(anchor, positive);
  const double dn = squared_distance_value(anchor, negative);
  return std::max(0.0, margin + dp - dn);
}

double combined_loss_value(double triplet_term, double relation_term, double lambda1) {
  if (lambda1 < 0) throw config_error("lambda1 must be non-negative");
  return triplet_term + lambda1 * relation_term;
}

Var squared_distance(Tape& tape, Var a, Var b) { return tape.sum_squares(tape.sub(a, b)); }

Var triplet_loss(Tape& tape, Var anchor, Var positive, Var negative, double margin) {
  Var dp = squared_distance(tape, anchor, positive);
  Var dn = squared_distance(tape, anchor, negative);
  return tape.relu(tape.add_const(tape.sub(dp, dn), margin));
}

Var combined_loss(Tape& tape, Var triplet_term, Var relation_term, double lambda1) {
  if (lambda1 < 0) throw config_error("lambda1 must be non-negative");
  return tape.add(triplet_term, tape.scale(relation_term, lambda1));
}

Tensor RelationBatchPlan::one_hot() const {
  Tensor t(Shape{pairs.size()});
  t[true_index] = 1.0;
  return t;
}

RelationBatchPlan sample_relation_pairs(const std::vector<TripletSample>& batch, int P, Rng& rng,
                                        const MatchPredicate& is_match) {
  if (P < 2) throw config_error("relation pair count P must be at least 2");
  if (batch.empty()) throw data_error("mini-batch too small: no triplets for relation pairs");

  const size_t B = batch.size();
  const size_t true_anchor = rng.index(B);

  // candidate false pairs: (anchor_i, positive_j) with j != i, and
  // (anchor_i, negative_j) for any j (own negative allowed)
  std::vector<RelationPairChoice> candidates;
  candidates.reserve(B * 2 * B);
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = 0; j < B; ++j) {
      if (j != i) candidates.push_back({i, PairAtom::Positive, j});
      candidates.push_back({i, PairAtom::Negative, j});
    }
  }
  for (size_t i = candidates.size(); i > 1; --i) {
    std::swap(candidates[i - 1], candidates[rng.index(i)]);
  }

  std::vector<RelationPairChoice> chosen;
  for (const auto& c : candidates) {
    if (int(chosen.size()) == P - 1) break;
    const TripletSample& anchor = batch[c.anchor_triplet];
    const TripletSample& atom_src = batch[c.atom_triplet];
    const std::string& clip = c.atom == PairAtom::Positive ? atom_src.pos_clip : atom_src.neg_clip;
    const int frame = c.atom == PairAtom::Positive ? atom_src.pos_frame : atom_src.neg_frame;
    if (is_match(anchor, clip, frame)) continue;  // accidentally matching: rejected
    chosen.push_back(c);
  }
  if (int(chosen.size()) != P - 1) {
    throw data_error("mini-batch too small: only " + std::to_string(chosen.size()) +
                     " distinct non-matching pairs available, need " + std::to_string(P - 1));
  }

  RelationBatchPlan plan;
  plan.pairs.resize(size_t(P));
  plan.true_index = rng.index(size_t(P));
  plan.pairs[plan.true_index] = {true_anchor, PairAtom::Positive, true_anchor};
  size_t next = 0;
  for (size_t i = 0; i < size_t(P); ++i) {
    if (i == plan.true_index) continue;
    plan.pairs[i] = chosen[next++];
  }
  return plan;
}

}  // namespace svr
