#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sketchvid/config.hpp"
#include "sketchvid/dataset.hpp"
#include "sketchvid/tensor.hpp"

namespace svr {

// Dense displacement field between two frames, in pixels.
struct FlowField {
  Tensor u;  // H x W horizontal
  Tensor v;  // H x W vertical
};

// 2L channels of alternating u, v flows from L consecutive frame pairs.
struct FlowStack {
  Tensor channels;  // 2L x H x W
  int start_frame = 1;  // 1-based
};

Tensor luminance(const Tensor& rgb_frame);

// Duality-based TV-L1 flow with a coarse-to-fine pyramid and fixed-point
// primal-dual inner iterations. Fully deterministic for fixed params.
// When `energy_trace` is given it receives the objective after each warp
// at the finest pyramid level (a warp is only accepted if it does not
// increase the objective, so the trace is non-increasing).
FlowField tvl1_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowParams& params,
                    std::vector<double>* energy_trace = nullptr);

// TV-L1 objective for a given flow; also usable as an independent check.
double tvl1_energy(const Tensor& frame_a, const Tensor& frame_b, const FlowField& flow,
                   double lambda);

FlowStack stack_flows(const VideoClip& clip, int start_frame, int stack_length,
                      const FlowParams& params);

// Disk-backed memoization of per-pair flows, keyed by clip id and flow
// params. Values are quantized to float32 on compute so that cache hits,
// reloads, and recomputes are all bitwise identical.
class FlowCache {
 public:
  FlowCache(fs::path dir, FlowParams params);

  const std::vector<FlowField>& pair_flows(const VideoClip& clip) const;
  FlowStack stack(const VideoClip& clip, int start_frame, int stack_length) const;
  std::vector<FlowStack> all_stacks(const VideoClip& clip, int stack_length) const;

  const FlowParams& params() const { return params_; }
  uint64_t params_hash() const { return params_hash_; }

  // instrumentation
  size_t pairs_computed() const { return pairs_computed_; }
  size_t file_hits() const { return file_hits_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  fs::path cache_file(const std::string& clip_id) const;

 private:
  fs::path dir_;
  FlowParams params_;
  uint64_t params_hash_;
  mutable std::map<std::string, std::vector<FlowField>> memory_;
  mutable size_t pairs_computed_ = 0;
  mutable size_t file_hits_ = 0;
  mutable std::vector<std::string> warnings_;
};

}  // namespace svr
