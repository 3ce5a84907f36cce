#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sketchvid/config.hpp"
#include "sketchvid/sketch.hpp"
#include "sketchvid/tensor.hpp"

namespace svr {

namespace fs = std::filesystem;

struct AppearanceSpec {
  int clothing_id = 0;  // 0..15: hatch angle, period, and palette variant
  int hair_id = 0;      // 0..3
  uint64_t limb_seed = 0;
};

enum class SegmentKind { Glide, Spin, Jump, Static };

const char* segment_kind_name(SegmentKind k);

// One motion-program segment; each segment becomes one sketch page.
// Glide: angle = screen direction (deg, 0 = +x, 90 = +y/down), speed px/frame.
// Spin:  speed = signed rad/frame about the torso axis, angle = phase deg.
// Jump:  speed = apex height in px.
struct MotionSegment {
  SegmentKind kind = SegmentKind::Static;
  double angle_deg = 0.0;
  double speed = 0.0;
  int frames = 16;
};

struct ClipSpec {
  AppearanceSpec appearance;
  std::vector<MotionSegment> segments;
  int twin_pair = -1;
  char twin_role = 'n';  // 'a' appearance twin, 'm' motion twin, 'n' plain

  int total_frames() const;
};

struct VideoClip {
  std::string id;
  std::vector<Tensor> frames;  // each 3 x H x W in [0,1]
  int fps = 30;
};

// Per-page inclusive frame interval [start, end], 1-based, index i = page i+1.
struct AlignmentAnnotation {
  std::vector<std::array<int, 2>> intervals;
};

struct DatasetEntry {
  std::string clip_id;
  std::string sketch_id;
  std::string split;  // train | val | test
  std::string clip_file;
  std::string sketch_file;
  std::string alignment_file;
  int pages = 0;
  int twin_pair = -1;
  char twin_role = 'n';
};

struct DatasetManifest {
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  int frame_size = 64;
  std::vector<DatasetEntry> entries;

  const DatasetEntry& entry_for_clip(const std::string& clip_id) const;
  const DatasetEntry& entry_for_sketch(const std::string& sketch_id) const;
};

// --- rendering ---------------------------------------------------------

Tensor render_background(int frame_size);
// Throws if the motion program would take the figure out of frame.
void validate_clip_spec(const ClipSpec& spec, int frame_size);
VideoClip render_video(const ClipSpec& spec, uint64_t seed, int frame_size);
std::pair<SketchSequence, AlignmentAnnotation> render_sketch_pages(const ClipSpec& spec,
                                                                   uint64_t seed,
                                                                   int frame_size);

// --- spec construction --------------------------------------------------

// Twin benchmark clips: `appearance_twin_pairs` pairs sharing appearance but
// not motion kinds, then `motion_twin_pairs` pairs sharing the motion program
// but not appearance. Specs are returned in pair order.
std::vector<ClipSpec> make_twins(const GenConfig& cfg, uint64_t seed);
ClipSpec make_plain_spec(const GenConfig& cfg, Rng& rng);

uint64_t gen_config_hash(const GenConfig& cfg);

// --- generation and persistence ----------------------------------------

DatasetManifest generate_dataset(const GenConfig& cfg, uint64_t seed, const fs::path& out_dir);

// Writes a loaded dataset to a new directory bitwise-identically:
// load(save(D)) == D for manifests, rasters, and clip frames.
void save_dataset(const class Dataset& ds, const fs::path& out_dir);

void save_clip(const fs::path& path, const VideoClip& clip);
VideoClip load_clip(const fs::path& path, const std::string& id);
void save_sketch_json(const fs::path& path, const SketchSequence& seq);
SketchSequence load_sketch(const fs::path& sketch_json, const fs::path& dataset_root,
                           const DatasetEntry& entry, int frame_size);
void save_alignment(const fs::path& path, const AlignmentAnnotation& ann);
AlignmentAnnotation load_alignment(const fs::path& path);

void save_manifest(const fs::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const fs::path& path);

// Loaded dataset with lazy, memoized clip/sketch access.
class Dataset {
 public:
  static Dataset load(const fs::path& root);

  const fs::path& root() const { return root_; }
  const DatasetManifest& manifest() const { return manifest_; }
  int frame_size() const { return manifest_.frame_size; }

  const VideoClip& clip(const std::string& clip_id) const;
  const SketchSequence& sketch(const std::string& sketch_id) const;
  const AlignmentAnnotation& alignment(const std::string& clip_id) const;

  // split: train | val | test | all
  std::vector<const DatasetEntry*> split_entries(const std::string& split) const;

 private:
  fs::path root_;
  DatasetManifest manifest_;
  mutable std::map<std::string, VideoClip> clip_cache_;
  mutable std::map<std::string, SketchSequence> sketch_cache_;
  mutable std::map<std::string, AlignmentAnnotation> alignment_cache_;
};

}  // namespace svr
