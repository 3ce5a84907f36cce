#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "sketchvid/config.hpp"
#include "sketchvid/flow.hpp"
#include "sketchvid/optim.hpp"
#include "sketchvid/tape.hpp"

namespace svr {

// Convolutional embedding network: conv/relu blocks, global average pool,
// then the two-layer head ending in the shared embedding dimension.
class StreamNet {
 public:
  StreamNet(std::string name, size_t input_channels, int frame_size, const ModelConfig& cfg,
            Rng& init_rng);

  Var embed(Tape& tape, const Tensor& input);
  Tensor embed_value(const Tensor& input) const;  // tape-free forward

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  size_t input_channels() const { return input_channels_; }
  int embedding_dim() const { return cfg_.embedding_dim; }
  const std::string& name() const { return name_; }

 private:
  void check_input(const Tensor& input) const;

  std::string name_;
  size_t input_channels_;
  int frame_size_;
  ModelConfig cfg_;
  ParamSet params_;
  std::vector<Parameter*> conv_filters_;
  Parameter* fc1_w_ = nullptr;
  Parameter* fc1_b_ = nullptr;
  Parameter* fc2_w_ = nullptr;
  Parameter* fc2_b_ = nullptr;
};

// Pairwise comparator head: concatenated sketch/video embedding in, one
// match score out.
class RelationNet {
 public:
  RelationNet(std::string name, int embedding_dim, const ModelConfig& cfg, Rng& init_rng);

  Var score(Tape& tape, Var pair_concat);
  // One score per concatenated pair, stacked into a 1-D tensor.
  Var scores(Tape& tape, const std::vector<Var>& pairs);

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int input_dim() const { return input_dim_; }

 private:
  std::string name_;
  int input_dim_;
  ParamSet params_;
  Parameter* w1_ = nullptr;
  Parameter* b1_ = nullptr;
  Parameter* w2_ = nullptr;
  Parameter* b2_ = nullptr;
  Parameter* w3_ = nullptr;
  Parameter* b3_ = nullptr;
};

// Appearance stream: one CNN shared by the sketch-appearance, positive-frame
// and negative-frame branches, plus its relation head.
struct AppearanceModel {
  StreamNet cnn;
  RelationNet relation;

  static AppearanceModel create(const ModelConfig& cfg, int frame_size, uint64_t seed);
  std::vector<Parameter*> all_params();
  uint64_t digest() const;
};

// Motion stream: separate CNNs for sketch motion rasters (3 channels) and
// stacked flow (2L channels), plus the stream's relation head.
struct MotionModel {
  StreamNet sketch_cnn;
  StreamNet flow_cnn;
  RelationNet relation;

  static MotionModel create(const ModelConfig& cfg, int frame_size, int stack_length,
                            uint64_t seed);
  std::vector<Parameter*> all_params();
  uint64_t digest() const;
};

// 1 x H x W raster -> 3 x H x W so sketch inputs share the frame topology.
Tensor replicate3(const Tensor& raster);
// Network-facing sketch conditioning: ink-on-white (1 - raster) replicated
// to 3 channels, so sketch statistics resemble the bright video frames the
// shared appearance weights also see.
Tensor sketch_to_input(const Tensor& raster);
// Flow values scaled by the displacement bound and clamped to [-1, 1].
Tensor normalize_flow_stack(const FlowStack& stack, double max_displacement);

Tensor embed_appearance(const AppearanceModel& m, const Tensor& rgb_or_raster3);
Tensor embed_motion_sketch(const MotionModel& m, const Tensor& raster3);
Tensor embed_flow(const MotionModel& m, const FlowStack& stack, double max_displacement);

// --- checkpoints ---------------------------------------------------------

struct Checkpoint {
  uint64_t config_hash = 0;
  std::string dtype = "f64";  // f64 for bitwise-exact resume, f32 for compact export
  std::vector<std::pair<std::string, Tensor>> blobs;
  bool has_rng = false;
  std::array<uint64_t, 4> rng_state{};
  uint64_t epoch = 0;
  uint64_t iteration = 0;
  uint64_t mil_round = 0;
  std::string bags_json;  // MIL instance labels, empty outside weak training

  void save(const fs::path& path) const;
  static Checkpoint load(const fs::path& path);
};

void checkpoint_put_params(Checkpoint& ckpt, const ParamSet& params, const std::string& prefix);
void checkpoint_get_params(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix);

void checkpoint_put_appearance(Checkpoint& ckpt, AppearanceModel& m);
void checkpoint_get_appearance(const Checkpoint& ckpt, AppearanceModel& m);
void checkpoint_put_motion(Checkpoint& ckpt, MotionModel& m);
void checkpoint_get_motion(const Checkpoint& ckpt, MotionModel& m);

}  // namespace svr
