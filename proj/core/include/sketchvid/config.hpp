#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace svr {

// Procedural dataset generator settings.
struct GenConfig {
  int frame_size = 64;
  int plain_clips = 0;
  int appearance_twin_pairs = 8;
  int motion_twin_pairs = 8;
  int twin_segments = 3;
  int segment_frames_min = 14;
  int segment_frames_max = 18;
  double static_prob = 0.10;
  // Distribution of pages per clip for plain clips (index i -> i+1 pages).
  std::vector<double> page_count_weights = {0.15, 0.30, 0.35, 0.10, 0.05, 0.03, 0.01, 0.005, 0.005};
  double split_train = 0.663;
  double split_val = 0.095;
  int flow_length = 5;  // used to validate clips admit at least one flow stack
};

// TV-L1 solver settings.
struct FlowParams {
  double lambda = 0.15;
  double theta = 0.3;
  double tau = 0.25;
  int warps = 5;
  int iterations = 30;
  int pyramid_levels = 3;
  double scale = 0.5;
  bool median_filter = true;
  double max_displacement = 8.0;
  int stack_length = 5;  // L

  uint64_t digest() const;
};

// Embedding network topology (shared by the three CNNs; the flow CNN only
// differs in input depth).
struct ModelConfig {
  std::vector<int> conv_channels = {24, 48, 96};
  int conv_kernel = 3;
  int conv_stride = 2;
  int fc_hidden = 512;
  int embedding_dim = 256;
  int relation_hidden1 = 128;
  int relation_hidden2 = 32;
};

struct TrainSettings {
  double margin = 0.5;       // triplet margin
  double lambda1 = 0.001;    // relation loss weight
  double lr = 0.001;
  double lr_decay = 0.95;  // per-epoch multiplicative decay of the initial rate
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  int batch = 16;
  int relation_pairs = 5;    // P
  int epochs = 12;
  int triplets_per_page = 4;
  int mil_rounds = 4;
  int mil_epochs = 5;
  double mil_flip_fraction = 0.1;  // T
  std::string checkpoint_dtype = "f64";

  void validate() const;
};

struct RetrievalSettings {
  double lambda2 = 0.5;
  std::vector<int> ks = {1, 5, 10};
};

// One flat key-value config covering the whole pipeline. The canonical
// serialization (sorted keys, normalized values) is what gets hashed, so
// formatting differences never change a digest.
struct RunConfig {
  GenConfig gen;
  FlowParams flow;
  ModelConfig model;
  TrainSettings train;
  RetrievalSettings retrieval;
  uint64_t seed = 42;

  static RunConfig defaults() { return RunConfig{}; }
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  std::map<std::string, std::string> to_kv() const;
  std::string canonical_text() const;
  uint64_t hash() const;
  void save(const std::filesystem::path& path) const;
};

}  // namespace svr
