#include "sketchvid/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"

namespace svr {

using nlohmann::json;

const char* stream_name(StreamKind k) {
  return k == StreamKind::Appearance ? "appearance" : "motion";
}

void save_loss_csv(const fs::path& path, const std::vector<LossRow>& rows, bool append) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const bool write_header = !append || !fs::exists(path);
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw data_error("cannot write loss log: " + path.string());
  if (write_header) f << "iteration,stream,L_t,L_r,total,wall_ms\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%s,%.9g,%.9g,%.9g,%.3f\n",
                  (unsigned long long)r.iteration, r.stream.c_str(), r.triplet, r.relation,
                  r.total, r.wall_ms);
    f << buf;
  }
}

std::vector<TripletSample> build_triplets_strong(const Dataset& ds, StreamKind stream,
                                                 const std::vector<const DatasetEntry*>& entries,
                                                 int triplets_per_page, int stack_length, Rng& rng,
                                                 std::vector<std::string>* skip_log) {
  std::vector<TripletSample> out;
  for (const DatasetEntry* e : entries) {
    const SketchSequence& seq = ds.sketch(e->sketch_id);
    const AlignmentAnnotation& ann = ds.alignment(e->clip_id);
    const int O = int(ds.clip(e->clip_id).frames.size());
    const int max_start = stream == StreamKind::Motion ? O - stack_length : O;

    for (const auto& page : seq.pages) {
      const auto iv = ann.intervals.at(size_t(page.page_index - 1));
      const int lo = iv[0];
      const int hi = std::min(iv[1], max_start);
      if (lo > hi) {
        if (skip_log) {
          skip_log->push_back("skipped " + e->sketch_id + " page " +
                              std::to_string(page.page_index) + " on " + stream_name(stream) +
                              ": interval too short for a flow stack");
        }
        continue;
      }
      for (int t = 0; t < triplets_per_page; ++t) {
        TripletSample s;
        s.sketch_id = e->sketch_id;
        s.page_index = page.page_index;
        s.pos_clip = e->clip_id;
        s.pos_frame = int(rng.integer(lo, hi));

        // negatives: same clip outside the interval, or another clip, 50/50
        bool same_clip = rng.coin();
        std::vector<int> same_candidates;
        if (same_clip) {
          for (int f = 1; f <= max_start; ++f) {
            if (f < iv[0] || f > iv[1]) same_candidates.push_back(f);
          }
          if (same_candidates.empty()) same_clip = false;
        }
        if (same_clip) {
          s.neg_clip = e->clip_id;
          s.neg_frame = same_candidates[rng.index(same_candidates.size())];
        } else {
          const DatasetEntry* other = e;
          if (entries.size() < 2) throw data_error("need at least 2 clips for negatives");
          while (other == e) other = entries[rng.index(entries.size())];
          const int o_max = stream == StreamKind::Motion
                                ? int(ds.clip(other->clip_id).frames.size()) - stack_length
                                : int(ds.clip(other->clip_id).frames.size());
          s.neg_clip = other->clip_id;
          s.neg_frame = int(rng.integer(1, std::max(1, o_max)));
        }
        out.push_back(std::move(s));
      }
    }
  }
  for (size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.index(i)]);
  return out;
}

std::array<int, 2> weak_window(int page_index, int n_pages, int O) {
  if (page_index == 1) {  // also the single-page case: first-page rule
    return {1, (O + 1) / 2};
  }
  if (page_index == n_pages) {
    return {O / 2, O};
  }
  return {(O + 3) / 4, (3 * O) / 4};
}

size_t Bag::positive_count() const {
  size_t n = 0;
  for (bool b : positive) n += b ? 1 : 0;
  return n;
}

size_t BagSet::total_positives() const {
  size_t n = 0;
  for (const auto& b : bags) n += b.positive_count();
  return n;
}

std::string BagSet::to_json() const {
  json j = json::array();
  for (const auto& b : bags) {
    json bj;
    bj["sketch_id"] = b.sketch_id;
    bj["page_index"] = b.page_index;
    bj["stream"] = stream_name(b.stream);
    bj["clip_id"] = b.clip_id;
    bj["instances"] = b.instances;
    std::string labels(b.positive.size(), '0');
    for (size_t i = 0; i < b.positive.size(); ++i) labels[i] = b.positive[i] ? '1' : '0';
    bj["positive"] = labels;
    j.push_back(bj);
  }
  return j.dump();
}

BagSet BagSet::from_json(const std::string& text) {
  BagSet out;
  json j = json::parse(text);
  for (const auto& bj : j) {
    Bag b;
    b.sketch_id = bj.at("sketch_id").get<std::string>();
    b.page_index = bj.at("page_index").get<int>();
    b.stream = bj.at("stream").get<std::string>() == "motion" ? StreamKind::Motion
                                                              : StreamKind::Appearance;
    b.clip_id = bj.at("clip_id").get<std::string>();
    b.instances = bj.at("instances").get<std::vector<int>>();
    const std::string labels = bj.at("positive").get<std::string>();
    if (labels.size() != b.instances.size()) throw data_error("bag label/instance size mismatch");
    b.positive.resize(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) b.positive[i] = labels[i] == '1';
    out.bags.push_back(std::move(b));
  }
  return out;
}

BagSet init_bags_weak(const Dataset& ds, StreamKind stream,
                      const std::vector<const DatasetEntry*>& entries, int stack_length) {
  BagSet out;
  for (const DatasetEntry* e : entries) {
    const SketchSequence& seq = ds.sketch(e->sketch_id);
    const int O = int(ds.clip(e->clip_id).frames.size());
    const int max_start = stream == StreamKind::Motion ? O - stack_length : O;
    for (const auto& page : seq.pages) {
      const auto w = weak_window(page.page_index, int(seq.pages.size()), O);
      Bag b;
      b.sketch_id = e->sketch_id;
      b.page_index = page.page_index;
      b.stream = stream;
      b.clip_id = e->clip_id;
      for (int f = w[0]; f <= std::min(w[1], max_start); ++f) b.instances.push_back(f);
      b.positive.assign(b.instances.size(), true);
      if (!b.instances.empty()) out.bags.push_back(std::move(b));
    }
  }
  return out;
}

size_t mil_label_inference(BagSet& bags,
                           const std::function<double(const Bag&, int instance)>& distance,
                           double T) {
  size_t flipped_total = 0;
  for (auto& bag : bags.bags) {
    std::vector<size_t> pos_idx;
    for (size_t i = 0; i < bag.instances.size(); ++i) {
      if (bag.positive[i]) pos_idx.push_back(i);
    }
    const size_t n_pos = pos_idx.size();
    if (n_pos <= 1) continue;
    size_t flips = size_t(std::ceil(T * double(n_pos)));
    flips = std::min(flips, n_pos - 1);  // a positive bag keeps >= 1 positive
    if (flips == 0) continue;

    std::vector<std::pair<double, int>> scored;  // (distance, frame index)
    scored.reserve(n_pos);
    std::vector<size_t> by_frame(n_pos);
    for (size_t k = 0; k < n_pos; ++k) {
      scored.emplace_back(distance(bag, bag.instances[pos_idx[k]]), bag.instances[pos_idx[k]]);
      by_frame[k] = pos_idx[k];
    }
    std::vector<size_t> order(n_pos);
    for (size_t k = 0; k < n_pos; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
      return scored[a].second < scored[b].second;  // ties: lower frame index flips first
    });
    for (size_t k = 0; k < flips; ++k) {
      bag.positive[by_frame[order[k]]] = false;
    }
    flipped_total += flips;
  }
  return flipped_total;
}

StreamTrainer::StreamTrainer(const Dataset& ds, FlowCache& flows, const RunConfig& cfg,
                             StreamKind kind, StreamNet& anchor_cnn, StreamNet& clip_cnn,
                             RelationNet& relation, std::vector<const DatasetEntry*> entries)
    : ds_(ds),
      flows_(flows),
      cfg_(cfg),
      kind_(kind),
      anchor_cnn_(anchor_cnn),
      clip_cnn_(clip_cnn),
      relation_(relation),
      entries_(std::move(entries)),
      rng_(Rng::substream(cfg.seed, kind == StreamKind::Appearance ? "train.appearance"
                                                                   : "train.motion")) {
  if (entries_.empty()) throw data_error("no dataset entries selected for training");
  cfg_.train.validate();
}

void StreamTrainer::restore(uint64_t epoch, uint64_t iteration, uint64_t mil_round,
                            const std::array<uint64_t, 4>& rng_state,
                            const std::string& bags_json) {
  epoch_ = epoch;
  iteration_ = iteration;
  mil_round_ = mil_round;
  rng_.set_state(rng_state);
  if (!bags_json.empty()) bags_ = BagSet::from_json(bags_json);
}

Tensor StreamTrainer::anchor_input(const TripletSample& t) const {
  const SketchSequence& seq = ds_.sketch(t.sketch_id);
  const SketchPage& page = seq.pages.at(size_t(t.page_index - 1));
  return sketch_to_input(kind_ == StreamKind::Appearance ? page.appearance_raster
                                                         : page.motion_raster);
}

Tensor StreamTrainer::clip_input(const std::string& clip_id, int frame) const {
  const VideoClip& clip = ds_.clip(clip_id);
  if (kind_ == StreamKind::Appearance) {
    return clip.frames.at(size_t(frame - 1));
  }
  return normalize_flow_stack(flows_.stack(clip, frame, cfg_.flow.stack_length),
                              cfg_.flow.max_displacement);
}

MatchPredicate StreamTrainer::strong_match() const {
  return [this](const TripletSample& anchor, const std::string& clip, int frame) {
    const SketchSequence& seq = ds_.sketch(anchor.sketch_id);
    if (clip != seq.paired_clip_id) return false;
    const auto iv = ds_.alignment(seq.paired_clip_id).intervals.at(size_t(anchor.page_index - 1));
    return frame >= iv[0] && frame <= iv[1];
  };
}

MatchPredicate StreamTrainer::weak_match() const {
  return [this](const TripletSample& anchor, const std::string& clip, int frame) {
    const SketchSequence& seq = ds_.sketch(anchor.sketch_id);
    if (clip != seq.paired_clip_id) return false;
    for (const auto& bag : bags_.bags) {
      if (bag.sketch_id != anchor.sketch_id || bag.page_index != anchor.page_index) continue;
      for (size_t i = 0; i < bag.instances.size(); ++i) {
        if (bag.instances[i] == frame) return bag.positive[i];
      }
      return false;
    }
    return false;
  };
}

std::vector<Parameter*> StreamTrainer::trainable_params() {
  std::vector<Parameter*> out;
  std::set<Parameter*> seen;
  auto push_all = [&](ParamSet& ps) {
    for (Parameter* p : ps.all()) {
      if (seen.insert(p).second) out.push_back(p);
    }
  };
  push_all(anchor_cnn_.params());
  push_all(clip_cnn_.params());  // same object on the appearance stream
  push_all(relation_.params());
  return out;
}

double StreamTrainer::iteration_step(const std::vector<TripletSample>& batch,
                                     const MatchPredicate& is_match, TrainResult& result) {
  const auto t0 = std::chrono::steady_clock::now();
  Tape tape;

  std::vector<Var> anchors, positives, negatives, losses;
  anchors.reserve(batch.size());
  for (const auto& t : batch) {
    Var a = anchor_cnn_.embed(tape, anchor_input(t));
    Var p = clip_cnn_.embed(tape, clip_input(t.pos_clip, t.pos_frame));
    Var n = clip_cnn_.embed(tape, clip_input(t.neg_clip, t.neg_frame));
    anchors.push_back(a);
    positives.push_back(p);
    negatives.push_back(n);
    losses.push_back(triplet_loss(tape, a, p, n, cfg_.train.margin));
  }
  Var l_t = tape.scale(tape.add_n(losses), 1.0 / double(batch.size()));

  const RelationBatchPlan plan =
      sample_relation_pairs(batch, cfg_.train.relation_pairs, rng_, is_match);
  std::vector<Var> pair_vars;
  pair_vars.reserve(plan.pairs.size());
  for (const auto& c : plan.pairs) {
    const Var video = c.atom == PairAtom::Positive ? positives[c.atom_triplet]
                                                   : negatives[c.atom_triplet];
    pair_vars.push_back(tape.concat(anchors[c.anchor_triplet], video));
  }
  Var scores = relation_.scores(tape, pair_vars);
  Var l_r = tape.softmax_cross_entropy(scores, plan.one_hot());
  Var loss = combined_loss(tape, l_t, l_r, cfg_.train.lambda1);

  const double loss_val = tape.value(loss)[0];
  const double lt_val = tape.value(l_t)[0];
  const double lr_val = tape.value(l_r)[0];
  if (!std::isfinite(loss_val)) {
    throw numeric_error("non-finite loss at iteration " + std::to_string(iteration_) + " on " +
                        stream_name(kind_) + " stream (L_t=" + std::to_string(lt_val) +
                        ", L_r=" + std::to_string(lr_val) + ")");
  }

  auto params = trainable_params();
  for (Parameter* p : params) p->zero_grad();
  tape.backward(loss);
  const double lr = cfg_.train.lr * std::pow(cfg_.train.lr_decay, double(epoch_));
  rmsprop_step(params, RmsPropConfig{lr, cfg_.train.rms_decay, cfg_.train.rms_eps});

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  result.trace.push_back({iteration_, stream_name(kind_), lt_val, lr_val, loss_val, ms});
  ++iteration_;
  return loss_val;
}

void StreamTrainer::run_epoch(const std::vector<TripletSample>& triplets,
                              const MatchPredicate& is_match, TrainResult& result,
                              const TrainHooks& hooks) {
  const size_t B = size_t(cfg_.train.batch);
  for (size_t off = 0; off < triplets.size(); off += B) {
    const size_t end = std::min(off + B, triplets.size());
    if (end - off < 2) break;  // too small for relation pairs
    std::vector<TripletSample> batch(triplets.begin() + long(off), triplets.begin() + long(end));
    try {
      iteration_step(batch, is_match, result);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Numeric && hooks.on_halt) hooks.on_halt(e.what());
      throw;
    }
  }
}

TrainResult StreamTrainer::train_strong(const TrainHooks& hooks) {
  TrainResult result;
  const MatchPredicate is_match = strong_match();
  for (; epoch_ < uint64_t(cfg_.train.epochs); ) {
    auto triplets = build_triplets_strong(ds_, kind_, entries_, cfg_.train.triplets_per_page,
                                          cfg_.flow.stack_length, rng_, &result.skip_log);
    run_epoch(triplets, is_match, result, hooks);
    ++epoch_;
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch_);
  }
  return result;
}

std::vector<TripletSample> StreamTrainer::build_triplets_weak() {
  std::vector<TripletSample> out;
  for (const auto& bag : bags_.bags) {
    std::vector<int> pos;
    for (size_t i = 0; i < bag.instances.size(); ++i) {
      if (bag.positive[i]) pos.push_back(bag.instances[i]);
    }
    if (pos.empty()) continue;
    const int O = int(ds_.clip(bag.clip_id).frames.size());
    const int max_start = kind_ == StreamKind::Motion ? O - cfg_.flow.stack_length : O;

    for (int t = 0; t < cfg_.train.triplets_per_page; ++t) {
      TripletSample s;
      s.sketch_id = bag.sketch_id;
      s.page_index = bag.page_index;
      s.pos_clip = bag.clip_id;
      s.pos_frame = pos[rng_.index(pos.size())];

      bool same_clip = rng_.coin();
      std::vector<int> same_candidates;
      if (same_clip) {
        for (int f = 1; f <= max_start; ++f) {
          bool is_positive_instance = false;
          for (size_t i = 0; i < bag.instances.size(); ++i) {
            if (bag.instances[i] == f && bag.positive[i]) {
              is_positive_instance = true;
              break;
            }
          }
          if (!is_positive_instance) same_candidates.push_back(f);
        }
        if (same_candidates.empty()) same_clip = false;
      }
      if (same_clip) {
        s.neg_clip = bag.clip_id;
        s.neg_frame = same_candidates[rng_.index(same_candidates.size())];
      } else {
        const DatasetEntry* other = nullptr;
        do {
          other = entries_[rng_.index(entries_.size())];
        } while (other->clip_id == bag.clip_id);
        const int o_max = kind_ == StreamKind::Motion
                              ? int(ds_.clip(other->clip_id).frames.size()) - cfg_.flow.stack_length
                              : int(ds_.clip(other->clip_id).frames.size());
        s.neg_clip = other->clip_id;
        s.neg_frame = int(rng_.integer(1, std::max(1, o_max)));
      }
      out.push_back(std::move(s));
    }
  }
  for (size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng_.index(i)]);
  return out;
}

TrainResult StreamTrainer::train_weak(const TrainHooks& hooks) {
  TrainResult result;
  if (bags_.bags.empty()) {
    bags_ = init_bags_weak(ds_, kind_, entries_, cfg_.flow.stack_length);
  }
  const MatchPredicate is_match = weak_match();

  for (; mil_round_ < uint64_t(cfg_.train.mil_rounds);) {
    // (i) Learning: instance labels fixed, representation updated
    for (int e = 0; e < cfg_.train.mil_epochs; ++e) {
      auto triplets = build_triplets_weak();
      run_epoch(triplets, is_match, result, hooks);
      ++epoch_;
    }
    // (ii) Label inference: network frozen, furthest positives flipped
    std::map<std::string, Tensor> anchor_cache;
    auto distance = [&](const Bag& bag, int instance) {
      const std::string key = bag.sketch_id + "#" + std::to_string(bag.page_index);
      auto it = anchor_cache.find(key);
      if (it == anchor_cache.end()) {
        TripletSample probe;
        probe.sketch_id = bag.sketch_id;
        probe.page_index = bag.page_index;
        it = anchor_cache.emplace(key, anchor_cnn_.embed_value(anchor_input(probe))).first;
      }
      const Tensor inst = clip_cnn_.embed_value(clip_input(bag.clip_id, instance));
      return squared_distance_value(it->second, inst);
    };
    const size_t flipped = mil_label_inference(bags_, distance, cfg_.train.mil_flip_fraction);
    ++mil_round_;
    result.mil_rounds.push_back({int(mil_round_), flipped, bags_.total_positives()});
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch_);
  }
  return result;
}

namespace {

Checkpoint make_checkpoint(const StreamTrainer* trainer, uint64_t config_hash,
                           const std::string& dtype) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  ckpt.dtype = dtype;
  if (trainer != nullptr) {
    StreamTrainer& t = const_cast<StreamTrainer&>(*trainer);
    ckpt.has_rng = true;
    ckpt.rng_state = t.rng().state();
    ckpt.epoch = trainer->epoch();
    ckpt.iteration = trainer->iteration();
    ckpt.mil_round = trainer->mil_round();
    if (!t.bags().bags.empty()) ckpt.bags_json = t.bags().to_json();
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, StreamTrainer* trainer,
                      uint64_t expected_config_hash, const fs::path& path) {
  if (expected_config_hash != 0 && ckpt.config_hash != expected_config_hash) {
    throw data_error("checkpoint config digest mismatch in " + path.string() + ": stored " +
                     hex64(ckpt.config_hash) + " vs expected " + hex64(expected_config_hash));
  }
  if (trainer != nullptr) {
    if (!ckpt.has_rng) throw data_error("checkpoint lacks trainer state: " + path.string());
    trainer->restore(ckpt.epoch, ckpt.iteration, ckpt.mil_round, ckpt.rng_state, ckpt.bags_json);
  }
}

}  // namespace

void save_stream_checkpoint(const fs::path& path, AppearanceModel& model,
                            const StreamTrainer* trainer, uint64_t config_hash,
                            const std::string& dtype) {
  Checkpoint ckpt = make_checkpoint(trainer, config_hash, dtype);
  checkpoint_put_appearance(ckpt, model);
  ckpt.save(path);
}

void save_stream_checkpoint(const fs::path& path, MotionModel& model, const StreamTrainer* trainer,
                            uint64_t config_hash, const std::string& dtype) {
  Checkpoint ckpt = make_checkpoint(trainer, config_hash, dtype);
  checkpoint_put_motion(ckpt, model);
  ckpt.save(path);
}

void load_stream_checkpoint(const fs::path& path, AppearanceModel& model, StreamTrainer* trainer,
                            uint64_t expected_config_hash) {
  const Checkpoint ckpt = Checkpoint::load(path);
  apply_checkpoint(ckpt, trainer, expected_config_hash, path);
  checkpoint_get_appearance(ckpt, model);
}

void load_stream_checkpoint(const fs::path& path, MotionModel& model, StreamTrainer* trainer,
                            uint64_t expected_config_hash) {
  const Checkpoint ckpt = Checkpoint::load(path);
  apply_checkpoint(ckpt, trainer, expected_config_hash, path);
  checkpoint_get_motion(ckpt, model);
}

}  // namespace svr
