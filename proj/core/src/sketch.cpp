#include "sketchvid/sketch.hpp"

#include <algorithm>
#include <cmath>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"

namespace svr {

namespace {

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

Tensor rasterize_strokes(const std::vector<Stroke>& strokes, int height, int width,
                         bool include_motion) {
  Tensor raster(Shape{1, size_t(height), size_t(width)});
  const double half = 1.0;  // 2 px nominal width
  for (const auto& stroke : strokes) {
    if (stroke.is_motion != include_motion) continue;
    if (stroke.points.size() < 2) throw data_error("stroke needs at least 2 points");
    for (const auto& p : stroke.points) {
      if (p[0] < 0 || p[0] >= width || p[1] < 0 || p[1] >= height) {
        throw data_error("stroke point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                         ") outside page bounds");
      }
    }
    for (size_t s = 0; s + 1 < stroke.points.size(); ++s) {
      const double ax = stroke.points[s][0], ay = stroke.points[s][1];
      const double bx = stroke.points[s + 1][0], by = stroke.points[s + 1][1];
      const int x0 = std::max(0, int(std::floor(std::min(ax, bx) - 2)));
      const int x1 = std::min(width - 1, int(std::ceil(std::max(ax, bx) + 2)));
      const int y0 = std::max(0, int(std::floor(std::min(ay, by) - 2)));
      const int y1 = std::min(height - 1, int(std::ceil(std::max(ay, by) + 2)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d = point_segment_dist(x + 0.5, y + 0.5, ax, ay, bx, by);
          const double cov = std::clamp(half + 0.5 - d, 0.0, 1.0);
          if (cov > 0.0) {
            double& v = raster.at3(0, size_t(y), size_t(x));
            v = std::max(v, cov);
          }
        }
      }
    }
  }
  // snap to the 8-bit grid PGM files use, so save/load round-trips bitwise
  for (auto& v : raster.values()) v = std::round(v * 255.0) / 255.0;
  return raster;
}

StrokeBounds stroke_bounds(const std::vector<Stroke>& strokes, bool motion) {
  StrokeBounds b;
  for (const auto& s : strokes) {
    if (s.is_motion != motion) continue;
    for (const auto& p : s.points) {
      if (b.empty) {
        b.min_x = b.max_x = p[0];
        b.min_y = b.max_y = p[1];
        b.empty = false;
      } else {
        b.min_x = std::min(b.min_x, p[0]);
        b.max_x = std::max(b.max_x, p[0]);
        b.min_y = std::min(b.min_y, p[1]);
        b.max_y = std::max(b.max_y, p[1]);
      }
    }
  }
  return b;
}

}  // namespace svr
