#pragma once

#include <map>
#include <string>
#include <vector>

#include "sketchvid/dataset.hpp"
#include "sketchvid/flow.hpp"
#include "sketchvid/model.hpp"

namespace svr {

enum class RetrievalMode { Appearance, Motion, Concat, RankFuse };
const char* mode_name(RetrievalMode m);
RetrievalMode mode_from_string(const std::string& s);

// Per-page query embeddings for both streams.
struct EmbeddedQuery {
  std::string sketch_id;
  std::string true_clip_id;
  std::vector<Tensor> appearance;  // one 256-D embedding per page
  std::vector<Tensor> motion;
  uint64_t params_digest = 0;
};

// Per-position gallery embeddings for one clip. Position k (1-based) pairs
// frame k with the flow stack starting at min(k, O-L).
struct EmbeddedClip {
  std::string clip_id;
  std::vector<Tensor> appearance;
  std::vector<Tensor> motion;
};

class GalleryIndex {
 public:
  static GalleryIndex build(const Dataset& ds, const std::vector<const DatasetEntry*>& entries,
                            const AppearanceModel& app, const MotionModel& mo, FlowCache& flows);

  const std::vector<EmbeddedClip>& clips() const { return clips_; }
  uint64_t params_digest() const { return params_digest_; }
  size_t size() const { return clips_.size(); }

 private:
  std::vector<EmbeddedClip> clips_;
  uint64_t params_digest_ = 0;
};

EmbeddedQuery embed_query(const Dataset& ds, const DatasetEntry& entry, const AppearanceModel& app,
                          const MotionModel& mo);

// Temporal bounds of gallery position k for page j of M over O positions,
// 1-based inclusive. A single-page query searches the whole clip.
std::array<int, 2> sequence_bounds(int page, int n_pages, int n_positions);

// Mean over pages of the nearest-neighbour matching cost within the page's
// temporal bounds. Concat mode sums both streams' squared distances, which
// equals the squared distance between concatenated embeddings.
double sequence_distance(const EmbeddedQuery& query, const EmbeddedClip& clip, RetrievalMode mode);

struct RankedEntry {
  std::string clip_id;
  double distance = 0;
};

struct RankedResult {
  std::string query_id;
  std::vector<RankedEntry> entries;  // ascending distance, ties by clip id
  int rank_of(const std::string& clip_id) const;  // 1-based
};

RankedResult rank_gallery(const EmbeddedQuery& query, const GalleryIndex& index,
                          RetrievalMode mode);

// Weighted arithmetic mean of per-stream ranks; ascending fused rank wins,
// ties broken by clip id. Inputs must rank the same clip set.
RankedResult fuse_ranks(const RankedResult& by_appearance, const RankedResult& by_motion,
                        double lambda2);

double acc_at_k(const std::vector<RankedResult>& results,
                const std::map<std::string, std::string>& truth, int k);

struct DetectionResult {
  std::string sketch_id;
  int page_index = 1;
  int proposed_frame = 1;
  std::array<int, 2> truth_interval{1, 1};
  bool success = false;
};

// Nearest-neighbour frame index for one page within one clip (ties toward
// the lower index); success when within `tolerance` frames of the annotated
// interval, counting indices inside the interval as distance zero.
DetectionResult detect_action(const EmbeddedQuery& query, size_t page_index_1based,
                              const EmbeddedClip& clip, RetrievalMode mode,
                              const std::array<int, 2>& truth_interval, int tolerance = 5);

// --- result emission ------------------------------------------------------

void save_results_csv(const fs::path& path, const std::vector<RankedResult>& results,
                      RetrievalMode mode);
void save_metrics_json(const fs::path& path, const std::string& mode,
                       const std::map<int, double>& acc_by_k, double detection_accuracy,
                       uint64_t config_hash, uint64_t params_digest);

}  // namespace svr
