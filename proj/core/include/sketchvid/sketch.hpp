#pragma once

#include <array>
#include <string>
#include <vector>

#include "sketchvid/tensor.hpp"

namespace svr {

// One polyline of a sketch page. Motion strokes form the page's single
// motion vector; a page without them is static.
struct Stroke {
  std::vector<std::array<double, 2>> points;  // (x, y) in [0, W) x [0, H)
  bool is_motion = false;
};

struct SketchPage {
  Tensor appearance_raster;  // 1 x H x W, values k/255
  Tensor motion_raster;      // 1 x H x W
  int page_index = 1;        // 1-based
  bool is_static = false;
  std::vector<Stroke> strokes;
};

struct SketchSequence {
  std::string id;
  std::string paired_clip_id;
  std::vector<SketchPage> pages;
};

// Anti-aliased polyline rendering at 2 px stroke width; selects motion or
// appearance strokes exclusively. Throws on out-of-bounds points.
Tensor rasterize_strokes(const std::vector<Stroke>& strokes, int height, int width,
                         bool include_motion);

// Bounding box over point coordinates of the selected stroke subset.
struct StrokeBounds {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  bool empty = true;
};
StrokeBounds stroke_bounds(const std::vector<Stroke>& strokes, bool motion);

}  // namespace svr
