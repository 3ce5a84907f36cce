#include "sketchvid/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"
#include "sketchvid/losses.hpp"

namespace svr {

using nlohmann::json;

const char* mode_name(RetrievalMode m) {
  switch (m) {
    case RetrievalMode::Appearance: return "app";
    case RetrievalMode::Motion: return "motion";
    case RetrievalMode::Concat: return "concat";
    case RetrievalMode::RankFuse: return "rankfuse";
  }
  return "?";
}

RetrievalMode mode_from_string(const std::string& s) {
  if (s == "app" || s == "appearance") return RetrievalMode::Appearance;
  if (s == "motion") return RetrievalMode::Motion;
  if (s == "concat") return RetrievalMode::Concat;
  if (s == "rankfuse") return RetrievalMode::RankFuse;
  throw config_error("unknown retrieval mode: " + s);
}

GalleryIndex GalleryIndex::build(const Dataset& ds,
                                 const std::vector<const DatasetEntry*>& entries,
                                 const AppearanceModel& app, const MotionModel& mo,
                                 FlowCache& flows) {
  GalleryIndex index;
  index.params_digest_ = app.digest() * 0x100000001b3ULL ^ mo.digest();
  const int L = flows.params().stack_length;
  for (const DatasetEntry* e : entries) {
    const VideoClip& clip = ds.clip(e->clip_id);
    const int O = int(clip.frames.size());
    EmbeddedClip ec;
    ec.clip_id = e->clip_id;
    ec.appearance.reserve(size_t(O));
    ec.motion.reserve(size_t(O));
    // flow-stack embeddings are shared by the positions that reuse them
    std::vector<Tensor> stack_embeddings(size_t(std::max(0, O - L)) + 1);
    std::vector<bool> has_stack(stack_embeddings.size(), false);
    for (int k = 1; k <= O; ++k) {
      ec.appearance.push_back(embed_appearance(app, clip.frames[size_t(k - 1)]));
      const int start = std::min(k, O - L);  // last positions reuse the final stack
      if (start < 1) throw data_error("clip " + e->clip_id + " too short for flow stacks");
      if (!has_stack[size_t(start)]) {
        stack_embeddings[size_t(start)] =
            embed_flow(mo, flows.stack(clip, start, L), flows.params().max_displacement);
        has_stack[size_t(start)] = true;
      }
      ec.motion.push_back(stack_embeddings[size_t(start)]);
    }
    index.clips_.push_back(std::move(ec));
  }
  return index;
}

EmbeddedQuery embed_query(const Dataset& ds, const DatasetEntry& entry, const AppearanceModel& app,
                          const MotionModel& mo) {
  const SketchSequence& seq = ds.sketch(entry.sketch_id);
  EmbeddedQuery q;
  q.sketch_id = entry.sketch_id;
  q.true_clip_id = entry.clip_id;
  q.params_digest = app.digest() * 0x100000001b3ULL ^ mo.digest();
  for (const auto& page : seq.pages) {
    q.appearance.push_back(embed_appearance(app, page.appearance_raster));
    q.motion.push_back(embed_motion_sketch(mo, page.motion_raster));
  }
  return q;
}

std::array<int, 2> sequence_bounds(int page, int n_pages, int O) {
  if (O < 1) throw data_error("sequence_bounds needs at least one position");
  std::array<int, 2> b{1, O};
  if (n_pages == 1) {
    b = {1, O};  // the first/last rules coincide: use their union
  } else if (page == 1) {
    b = {1, (O + 1) / 2};
  } else if (page == n_pages) {
    b = {O / 2, O};
  } else {
    b = {(O + 3) / 4, (3 * O) / 4};
  }
  b[0] = std::max(1, std::min(b[0], O));
  b[1] = std::max(b[0], std::min(b[1], O));
  return b;
}

namespace {

double page_position_distance(const EmbeddedQuery& q, const EmbeddedClip& c, size_t page,
                              size_t pos, RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::Appearance:
      return squared_distance_value(q.appearance[page], c.appearance[pos]);
    case RetrievalMode::Motion:
      return squared_distance_value(q.motion[page], c.motion[pos]);
    case RetrievalMode::Concat:
      return squared_distance_value(q.appearance[page], c.appearance[pos]) +
             squared_distance_value(q.motion[page], c.motion[pos]);
    case RetrievalMode::RankFuse:
      break;
  }
  throw config_error("rank fusion has no single-pair distance; rank per stream and fuse");
}

}  // namespace

double sequence_distance(const EmbeddedQuery& query, const EmbeddedClip& clip,
                         RetrievalMode mode) {
  const size_t M = query.appearance.size();
  const int O = int(clip.appearance.size());
  if (M < 1) throw data_error("empty page list in sequence_distance");
  if (O < 2) throw data_error("sequence_distance needs at least 2 gallery positions");

  double total = 0.0;
  for (size_t j = 0; j < M; ++j) {
    const auto b = sequence_bounds(int(j) + 1, int(M), O);
    double best = std::numeric_limits<double>::infinity();
    for (int k = b[0]; k <= b[1]; ++k) {
      best = std::min(best, page_position_distance(query, clip, j, size_t(k - 1), mode));
    }
    total += best;
  }
  return total / double(M);
}

int RankedResult::rank_of(const std::string& clip_id) const {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].clip_id == clip_id) return int(i) + 1;
  }
  throw data_error("clip " + clip_id + " not present in ranked result");
}

RankedResult rank_gallery(const EmbeddedQuery& query, const GalleryIndex& index,
                          RetrievalMode mode) {
  if (query.params_digest != index.params_digest()) {
    throw data_error("stale index: query embedded with different parameters than the gallery");
  }
  if (index.size() == 0) throw data_error("empty gallery");
  if (mode == RetrievalMode::RankFuse) {
    throw config_error("rank_gallery ranks one stream; use fuse_ranks for rank fusion");
  }
  RankedResult r;
  r.query_id = query.sketch_id;
  r.entries.reserve(index.size());
  for (const auto& clip : index.clips()) {
    r.entries.push_back({clip.clip_id, sequence_distance(query, clip, mode)});
  }
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.clip_id < b.clip_id;
  });
  return r;
}

RankedResult fuse_ranks(const RankedResult& by_appearance, const RankedResult& by_motion,
                        double lambda2) {
  if (by_appearance.entries.size() != by_motion.entries.size()) {
    throw data_error("rank fusion inputs rank different gallery sizes");
  }
  const size_t n = by_appearance.entries.size();
  // both inputs must be permutations of the same clip set
  std::map<std::string, int> app_rank, mo_rank;
  for (size_t i = 0; i < n; ++i) app_rank[by_appearance.entries[i].clip_id] = int(i) + 1;
  for (size_t i = 0; i < n; ++i) mo_rank[by_motion.entries[i].clip_id] = int(i) + 1;
  if (app_rank.size() != n || mo_rank.size() != n) {
    throw data_error("rank fusion input is not a permutation (duplicate clip ids)");
  }
  for (const auto& [clip, rank] : app_rank) {
    (void)rank;
    if (!mo_rank.count(clip)) {
      throw data_error("rank fusion inputs rank different clip sets (missing " + clip + ")");
    }
  }

  RankedResult fused;
  fused.query_id = by_appearance.query_id;
  fused.entries.reserve(n);
  for (const auto& [clip, ra] : app_rank) {
    const double r = lambda2 * double(ra) + (1.0 - lambda2) * double(mo_rank[clip]);
    fused.entries.push_back({clip, r});
  }
  std::sort(fused.entries.begin(), fused.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.distance != b.distance) return a.distance < b.distance;
              return a.clip_id < b.clip_id;
            });
  return fused;
}

double acc_at_k(const std::vector<RankedResult>& results,
                const std::map<std::string, std::string>& truth, int k) {
  if (results.empty()) throw data_error("acc_at_k over zero queries");
  size_t hits = 0;
  for (const auto& r : results) {
    auto it = truth.find(r.query_id);
    if (it == truth.end()) throw data_error("missing truth entry for query " + r.query_id);
    if (r.rank_of(it->second) <= k) ++hits;
  }
  return double(hits) / double(results.size());
}

DetectionResult detect_action(const EmbeddedQuery& query, size_t page_index_1based,
                              const EmbeddedClip& clip, RetrievalMode mode,
                              const std::array<int, 2>& truth_interval, int tolerance) {
  const size_t page = page_index_1based - 1;
  if (page >= query.appearance.size()) throw data_error("page index out of range in detect_action");
  DetectionResult out;
  out.sketch_id = query.sketch_id;
  out.page_index = int(page_index_1based);
  out.truth_interval = truth_interval;

  double best = std::numeric_limits<double>::infinity();
  int best_k = 1;
  for (size_t k = 0; k < clip.appearance.size(); ++k) {
    const double d = page_position_distance(query, clip, page, k, mode);
    if (d < best) {  // strict: ties keep the lowest index
      best = d;
      best_k = int(k) + 1;
    }
  }
  out.proposed_frame = best_k;
  int dist = 0;
  if (best_k < truth_interval[0]) dist = truth_interval[0] - best_k;
  else if (best_k > truth_interval[1]) dist = best_k - truth_interval[1];
  out.success = dist <= tolerance;
  return out;
}

void save_results_csv(const fs::path& path, const std::vector<RankedResult>& results,
                      RetrievalMode mode) {
  std::string csv = "query_id,rank,clip_id,distance,mode\n";
  char buf[160];
  for (const auto& r : results) {
    for (size_t i = 0; i < r.entries.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%s,%.9g,%s\n", r.query_id.c_str(), i + 1,
                    r.entries[i].clip_id.c_str(), r.entries[i].distance, mode_name(mode));
      csv += buf;
    }
  }
  write_file_text(path, csv);
}

void save_metrics_json(const fs::path& path, const std::string& mode,
                       const std::map<int, double>& acc_by_k, double detection_accuracy,
                       uint64_t config_hash, uint64_t params_digest) {
  json j;
  j["mode"] = mode;
  json acc;
  for (const auto& [k, v] : acc_by_k) acc["acc@" + std::to_string(k)] = v;
  j["accuracy"] = acc;
  if (detection_accuracy >= 0) j["detection_accuracy"] = detection_accuracy;
  j["config_hash"] = hex64(config_hash);
  j["params_digest"] = hex64(params_digest);
  write_file_text(path, j.dump(2) + "\n");
}

}  // namespace svr
