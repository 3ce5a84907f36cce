#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sketchvid/tape.hpp"

namespace svr {

double squared_distance_value(const Tensor& a, const Tensor& b);
double triplet_loss_value(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                          double margin);
double combined_loss_value(double triplet_term, double relation_term, double lambda1);

Var squared_distance(Tape& tape, Var a, Var b);
// max(0, margin + ||a-p||^2 - ||a-n||^2)
Var triplet_loss(Tape& tape, Var anchor, Var positive, Var negative, double margin);
// triplet_term + lambda1 * relation_term
Var combined_loss(Tape& tape, Var triplet_term, Var relation_term, double lambda1);

// One training triplet, by reference into the dataset. `pos_frame` and
// `neg_frame` are 1-based frame indices for the appearance stream and flow
// stack start frames for the motion stream.
struct TripletSample {
  std::string sketch_id;
  int page_index = 1;
  std::string pos_clip;
  int pos_frame = 1;
  std::string neg_clip;
  int neg_frame = 1;
};

enum class PairAtom { Positive, Negative };

struct RelationPairChoice {
  size_t anchor_triplet = 0;  // mini-batch index supplying the sketch side
  PairAtom atom = PairAtom::Positive;
  size_t atom_triplet = 0;  // mini-batch index supplying the video side
};

struct RelationBatchPlan {
  std::vector<RelationPairChoice> pairs;  // size P, shuffled
  size_t true_index = 0;                  // position of the one true pair
  Tensor one_hot() const;
};

using MatchPredicate =
    std::function<bool(const TripletSample& anchor, const std::string& clip, int frame)>;

// Reorganize a mini-batch of triplets into P sketch-video relation pairs:
// exactly one (anchor, own positive) true pair; the P-1 false pairs combine
// anchors with positives/negatives of other triplets or their own negative,
// all distinct and verified non-matching via `is_match`.
RelationBatchPlan sample_relation_pairs(const std::vector<TripletSample>& batch, int P, Rng& rng,
                                        const MatchPredicate& is_match);

}  // namespace svr
