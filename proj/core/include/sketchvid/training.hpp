#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sketchvid/dataset.hpp"
#include "sketchvid/flow.hpp"
#include "sketchvid/losses.hpp"
#include "sketchvid/model.hpp"

namespace svr {

enum class StreamKind { Appearance, Motion };
const char* stream_name(StreamKind k);

struct LossRow {
  uint64_t iteration = 0;
  std::string stream;
  double triplet = 0;
  double relation = 0;
  double total = 0;
  double wall_ms = 0;
};

void save_loss_csv(const fs::path& path, const std::vector<LossRow>& rows, bool append);

// Per-page positive candidates under strong supervision, already shrunk to
// feasible flow-stack starts for the motion stream. Empty ranges are
// skipped with a log record.
std::vector<TripletSample> build_triplets_strong(const Dataset& ds, StreamKind stream,
                                                 const std::vector<const DatasetEntry*>& entries,
                                                 int triplets_per_page, int stack_length, Rng& rng,
                                                 std::vector<std::string>* skip_log = nullptr);

// --- multiple-instance supervision ---------------------------------------

// The three-case 50% pruning window, 1-based inclusive.
std::array<int, 2> weak_window(int page_index, int n_pages, int clip_frames);

struct Bag {
  std::string sketch_id;
  int page_index = 1;
  StreamKind stream = StreamKind::Appearance;
  std::string clip_id;                // the paired clip: the one positive bag
  std::vector<int> instances;         // frame indices / stack starts
  std::vector<bool> positive;         // per-instance label, refined over rounds

  size_t positive_count() const;
};

struct BagSet {
  std::vector<Bag> bags;

  size_t total_positives() const;
  std::string to_json() const;
  static BagSet from_json(const std::string& text);
};

BagSet init_bags_weak(const Dataset& ds, StreamKind stream,
                      const std::vector<const DatasetEntry*>& entries, int stack_length);

// Flip the furthest ceil(T * n_pos) positives per bag to negative (never
// dropping below one positive), ties broken toward lower frame index.
// Returns the number of flipped instances.
size_t mil_label_inference(BagSet& bags,
                           const std::function<double(const Bag&, int instance)>& distance,
                           double T);

// --- the training loop ----------------------------------------------------

struct TrainHooks {
  std::function<void(uint64_t epoch)> on_epoch_end;        // regular checkpoint point
  std::function<void(const std::string& reason)> on_halt;  // emergency checkpoint point
};

struct MilRoundSummary {
  int round = 0;
  size_t flipped = 0;
  size_t positives_remaining = 0;
};

struct TrainResult {
  std::vector<LossRow> trace;
  std::vector<MilRoundSummary> mil_rounds;
  std::vector<std::string> skip_log;
};

// Drives one stream (Algorithm-style loop): each iteration forwards a
// triplet mini-batch, computes the triplet term, reorganizes relation
// pairs, and takes one RMSprop step on the combined objective. The CNN
// receives the full combined gradient; the relation head only ever touches
// the relation term by construction of the graph.
class StreamTrainer {
 public:
  StreamTrainer(const Dataset& ds, FlowCache& flows, const RunConfig& cfg, StreamKind kind,
                StreamNet& anchor_cnn, StreamNet& clip_cnn, RelationNet& relation,
                std::vector<const DatasetEntry*> entries);

  TrainResult train_strong(const TrainHooks& hooks = {});
  TrainResult train_weak(const TrainHooks& hooks = {});

  // resume state
  uint64_t epoch() const { return epoch_; }
  uint64_t iteration() const { return iteration_; }
  uint64_t mil_round() const { return mil_round_; }
  Rng& rng() { return rng_; }
  BagSet& bags() { return bags_; }
  void restore(uint64_t epoch, uint64_t iteration, uint64_t mil_round,
               const std::array<uint64_t, 4>& rng_state, const std::string& bags_json);

  Tensor anchor_input(const TripletSample& t) const;
  Tensor clip_input(const std::string& clip_id, int frame) const;

 private:
  void run_epoch(const std::vector<TripletSample>& triplets, const MatchPredicate& is_match,
                 TrainResult& result, const TrainHooks& hooks);
  double iteration_step(const std::vector<TripletSample>& batch, const MatchPredicate& is_match,
                        TrainResult& result);
  std::vector<TripletSample> build_triplets_weak();
  MatchPredicate strong_match() const;
  MatchPredicate weak_match() const;
  std::vector<Parameter*> trainable_params();

  const Dataset& ds_;
  FlowCache& flows_;
  RunConfig cfg_;
  StreamKind kind_;
  StreamNet& anchor_cnn_;
  StreamNet& clip_cnn_;
  RelationNet& relation_;
  std::vector<const DatasetEntry*> entries_;
  Rng rng_;
  uint64_t epoch_ = 0;
  uint64_t iteration_ = 0;
  uint64_t mil_round_ = 0;
  BagSet bags_;
};

// Checkpoint wiring shared by the CLI, tests, and the acceptance suite.
// Trainer state (RNG, epoch, MIL bags) rides along when a trainer is given,
// making resumed runs bitwise-identical in f64 mode.
void save_stream_checkpoint(const fs::path& path, AppearanceModel& model,
                            const StreamTrainer* trainer, uint64_t config_hash,
                            const std::string& dtype);
void save_stream_checkpoint(const fs::path& path, MotionModel& model,
                            const StreamTrainer* trainer, uint64_t config_hash,
                            const std::string& dtype);
// expected_config_hash 0 skips the digest check.
void load_stream_checkpoint(const fs::path& path, AppearanceModel& model, StreamTrainer* trainer,
                            uint64_t expected_config_hash);
void load_stream_checkpoint(const fs::path& path, MotionModel& model, StreamTrainer* trainer,
                            uint64_t expected_config_hash);

}  // namespace svr
