#include "sketchvid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"

namespace svr {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0, y = 0;
};

struct Rgb {
  double r = 0, g = 0, b = 0;
};

struct Proportions {
  double head_r, torso_hw, arm_len, leg_len, neck_len;
};

Proportions proportions_for(uint64_t limb_seed) {
  Rng rng(limb_seed ^ 0x5eedf00d);
  Proportions p;
  p.head_r = 4.4 + rng.uniform() * 0.8;
  p.torso_hw = 5.3 + rng.uniform() * 0.7;
  p.arm_len = 8.8 + rng.uniform() * 1.4;
  p.leg_len = 9.9 + rng.uniform() * 1.2;
  p.neck_len = 1.5 + rng.uniform() * 0.6;
  return p;
}

// Arm/leg angles in degrees from straight down. Posture is a signature of
// the skater (derived from the appearance spec, asymmetric per side), with
// only small per-page variation: identity shows in both modalities while
// page position barely moves the limbs.
struct Pose {
  double arm_l, arm_r, leg_l, leg_r;
};

Pose pose_for(uint64_t limb_seed, int page_index) {
  Rng rng(limb_seed ^ 0x9a5e5eedULL);
  const double arm_l = -40.0 - rng.uniform() * 36.0;  // -40..-76
  const double arm_r = 40.0 + rng.uniform() * 36.0;
  const double leg_l = -8.0 - rng.uniform() * 16.0;  // -8..-24
  const double leg_r = 8.0 + rng.uniform() * 16.0;
  const int i = (page_index - 1) % 9;
  const double arm_delta = 5.0 * ((i % 3) - 1);
  const double leg_delta = 3.0 * (((i / 3) % 3) - 1);
  return Pose{arm_l - arm_delta, arm_r + arm_delta, leg_l - leg_delta, leg_r + leg_delta};
}

Pose lerp_pose(const Pose& a, const Pose& b, double t) {
  auto l = [t](double x, double y) { return x + (y - x) * t; };
  return Pose{l(a.arm_l, b.arm_l), l(a.arm_r, b.arm_r), l(a.leg_l, b.leg_l), l(a.leg_r, b.leg_r)};
}

// Clothing identity: 8 hatch angles x 2 color palettes. The stripe angle is
// visible in both modalities; the palette shows as hue in video and as
// single vs doubled hatch lines on the grayscale page.
struct Clothing {
  double angle_rad;
  double period;
  int palette;
  Rgb base, stripe;
};

Clothing clothing_for(int clothing_id) {
  Clothing c;
  // coprime stride spreads consecutive ids across the full angle circle
  const int angle_id = (clothing_id * 3) & 7;
  c.palette = clothing_id & 1;
  c.angle_rad = angle_id * 22.5 * kPi / 180.0;
  c.period = 5.5;
  if (c.palette == 0) {
    c.base = {0.80, 0.15, 0.25};  // crimson / amber
    c.stripe = {0.95, 0.80, 0.20};
  } else {
    c.base = {0.15, 0.35, 0.85};  // azure / near-white
    c.stripe = {0.92, 0.95, 0.98};
  }
  return c;
}

Rgb hair_color(int hair_id) {
  const double t = hair_id * 0.05;
  return Rgb{0.14 + t, 0.10 + t * 0.8, 0.08 + t * 0.6};
}

// Per-frame motion state of the figure.
struct MotionState {
  double dx = 0, dy = 0;  // translation
  double sx = 1.0;        // x-scale about the torso axis (spin)
};

// Displacement within a segment, relative to the segment's entry position.
MotionState motion_at(const MotionSegment& seg, int t_local) {
  MotionState m;
  switch (seg.kind) {
    case SegmentKind::Glide: {
      const double a = seg.angle_deg * kPi / 180.0;
      m.dx = seg.speed * std::cos(a) * t_local;
      m.dy = seg.speed * std::sin(a) * t_local;
      break;
    }
    case SegmentKind::Spin: {
      const double phase = seg.angle_deg * kPi / 180.0;
      m.sx = 0.55 + 0.45 * std::cos(2.0 * std::fabs(seg.speed) * t_local + phase);
      break;
    }
    case SegmentKind::Jump: {
      const double s = (t_local + 0.5) / seg.frames;
      m.dy = -4.0 * seg.speed * s * (1.0 - s);
      break;
    }
    case SegmentKind::Static:
      break;
  }
  return m;
}

// Position carried across segments (glides translate, everything else
// returns to its entry point), plus the base shift that centers the whole
// trajectory in the frame.
struct Trajectory {
  std::vector<Vec2> entry;  // per segment
  Vec2 base;                // added to every offset
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
};

Trajectory clip_trajectory(const ClipSpec& spec) {
  Trajectory tr;
  Vec2 pos{0, 0};
  for (const auto& seg : spec.segments) {
    tr.entry.push_back(pos);
    if (seg.kind == SegmentKind::Glide) {
      const double a = seg.angle_deg * kPi / 180.0;
      const Vec2 end{pos.x + seg.speed * std::cos(a) * seg.frames,
                     pos.y + seg.speed * std::sin(a) * seg.frames};
      tr.min_x = std::min(tr.min_x, std::min(pos.x, end.x));
      tr.max_x = std::max(tr.max_x, std::max(pos.x, end.x));
      tr.min_y = std::min(tr.min_y, std::min(pos.y, end.y));
      tr.max_y = std::max(tr.max_y, std::max(pos.y, end.y));
      pos = end;
    } else if (seg.kind == SegmentKind::Jump) {
      tr.min_y = std::min(tr.min_y, pos.y - seg.speed);
    }
    tr.min_x = std::min(tr.min_x, pos.x);
    tr.max_x = std::max(tr.max_x, pos.x);
    tr.min_y = std::min(tr.min_y, pos.y);
    tr.max_y = std::max(tr.max_y, pos.y);
  }
  tr.base = Vec2{-(tr.min_x + tr.max_x) / 2.0, -(tr.min_y + tr.max_y) / 2.0};
  return tr;
}

struct FigureLayout {
  double cx, cy;  // torso reference point in page coords
  Proportions prop;
  Pose pose;
  MotionState motion;

  double sx() const {
    const double s = motion.sx;
    const double a = std::max(std::fabs(s), 0.08);
    return s < 0 ? -a : a;
  }
  Vec2 world(double bx, double by) const {
    return Vec2{cx + bx * sx() + motion.dx, cy + by + motion.dy};
  }
  // body-space x, y from world point (for torso fills)
  Vec2 body(double wx, double wy) const {
    return Vec2{(wx - motion.dx - cx) / sx(), wy - motion.dy - cy};
  }

  double torso_top() const { return -8.0; }
  double torso_bottom() const { return 4.0; }
  Vec2 shoulder() const { return world(0.0, -7.0); }
  Vec2 hip() const { return world(0.0, 3.0); }
  Vec2 head_center() const { return world(0.0, torso_top() - prop.neck_len - prop.head_r); }
  Vec2 limb_end(Vec2 joint, double angle_deg, double len) const {
    const double a = angle_deg * kPi / 180.0;
    // angles rotate in body space; the x-component shares the spin scale
    return Vec2{joint.x + std::sin(a) * len * sx(), joint.y + std::cos(a) * len};
  }
};

// ---- video painting -----------------------------------------------------

class FramePainter {
 public:
  FramePainter(Tensor& frame) : frame_(frame), h_(int(frame.dim(1))), w_(int(frame.dim(2))) {}

  template <typename InsideFn, typename ColorFn>
  void paint(double x0, double y0, double x1, double y1, InsideFn inside, ColorFn color) {
    const int px0 = std::max(0, int(std::floor(x0)));
    const int px1 = std::min(w_ - 1, int(std::ceil(x1)));
    const int py0 = std::max(0, int(std::floor(y0)));
    const int py1 = std::min(h_ - 1, int(std::ceil(y1)));
    static const double off[2] = {0.25, 0.75};
    for (int y = py0; y <= py1; ++y) {
      for (int x = px0; x <= px1; ++x) {
        int cnt = 0;
        Rgb acc{0, 0, 0};
        for (double oy : off) {
          for (double ox : off) {
            const double sx = x + ox, sy = y + oy;
            if (!inside(sx, sy)) continue;
            const Rgb c = color(sx, sy);
            acc.r += c.r;
            acc.g += c.g;
            acc.b += c.b;
            ++cnt;
          }
        }
        if (cnt == 0) continue;
        const double a = cnt / 4.0;
        blend(x, y, Rgb{acc.r / cnt, acc.g / cnt, acc.b / cnt}, a);
      }
    }
  }

  void capsule(Vec2 a, Vec2 b, double radius, Rgb color) {
    paint(std::min(a.x, b.x) - radius - 1, std::min(a.y, b.y) - radius - 1,
          std::max(a.x, b.x) + radius + 1, std::max(a.y, b.y) + radius + 1,
          [&](double x, double y) {
            const double dx = b.x - a.x, dy = b.y - a.y;
            const double len2 = dx * dx + dy * dy;
            double t = len2 > 0 ? std::clamp(((x - a.x) * dx + (y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
            const double qx = a.x + t * dx - x, qy = a.y + t * dy - y;
            return qx * qx + qy * qy <= radius * radius;
          },
          [&](double, double) { return color; });
  }

  void ellipse(Vec2 c, double rx, double ry, Rgb color) {
    paint(c.x - rx - 1, c.y - ry - 1, c.x + rx + 1, c.y + ry + 1,
          [&](double x, double y) {
            const double u = (x - c.x) / rx, v = (y - c.y) / ry;
            return u * u + v * v <= 1.0;
          },
          [&](double, double) { return color; });
  }

 private:
  void blend(int x, int y, Rgb c, double a) {
    double* r = &frame_.at3(0, size_t(y), size_t(x));
    double* g = &frame_.at3(1, size_t(y), size_t(x));
    double* b = &frame_.at3(2, size_t(y), size_t(x));
    *r = *r * (1 - a) + c.r * a;
    *g = *g * (1 - a) + c.g * a;
    *b = *b * (1 - a) + c.b * a;
  }

  Tensor& frame_;
  int h_, w_;
};

// Toon-style rendering: filled shapes carry the palette, dark rims and
// stripe-boundary lines carry the same line geometry the sketch pages draw.
void paint_figure(Tensor& frame, const FigureLayout& fig, const Clothing& cloth, int hair_id) {
  FramePainter p(frame);
  const Rgb skin{0.87, 0.72, 0.60};
  const Rgb ink{0.10, 0.10, 0.12};
  const Rgb tights{cloth.base.r * 0.85, cloth.base.g * 0.85, cloth.base.b * 0.85};

  // legs + skates
  const Vec2 hip = fig.hip();
  const Vec2 foot_l = fig.limb_end(hip, fig.pose.leg_l, fig.prop.leg_len);
  const Vec2 foot_r = fig.limb_end(hip, fig.pose.leg_r, fig.prop.leg_len);
  p.capsule(hip, foot_l, 1.9, ink);
  p.capsule(hip, foot_r, 1.9, ink);
  p.capsule(hip, foot_l, 1.2, tights);
  p.capsule(hip, foot_r, 1.2, tights);
  p.capsule(foot_l, Vec2{foot_l.x + 2.2, foot_l.y}, 0.8, Rgb{0.95, 0.95, 0.97});
  p.capsule(foot_r, Vec2{foot_r.x + 2.2, foot_r.y}, 0.8, Rgb{0.95, 0.95, 0.97});

  // torso trapezoid: hatched fill, inked rim, and dark stripe boundaries
  const double ny = fig.torso_top(), hy = fig.torso_bottom();
  const double top_hw = fig.prop.torso_hw, bot_hw = fig.prop.torso_hw * 0.82;
  const Vec2 c0 = fig.world(-top_hw, ny), c1 = fig.world(top_hw, ny);
  const Vec2 c2 = fig.world(-bot_hw, hy), c3 = fig.world(bot_hw, hy);
  const double bx0 = std::min(std::min(c0.x, c1.x), std::min(c2.x, c3.x));
  const double bx1 = std::max(std::max(c0.x, c1.x), std::max(c2.x, c3.x));
  p.paint(bx0 - 1, c0.y - 1, bx1 + 1, c2.y + 1,
          [&](double x, double y) {
            const Vec2 b = fig.body(x, y);
            if (b.y < ny || b.y > hy) return false;
            const double hw = top_hw + (bot_hw - top_hw) * (b.y - ny) / (hy - ny);
            return std::fabs(b.x) <= hw;
          },
          [&](double x, double y) {
            const Vec2 b = fig.body(x, y);
            const double hw = top_hw + (bot_hw - top_hw) * (b.y - ny) / (hy - ny);
            if (hw - std::fabs(b.x) < 0.8 || b.y - ny < 0.7 || hy - b.y < 0.7) return ink;  // rim
            const double u = b.x * std::cos(cloth.angle_rad) + b.y * std::sin(cloth.angle_rad);
            const double m = u - std::floor(u / cloth.period) * cloth.period;
            const double to_boundary = std::min(m, cloth.period - m);
            if (to_boundary < 0.45) return ink;  // stripe edge, mirrors the sketch hatch
            return m < cloth.period * 0.5 ? cloth.base : cloth.stripe;
          });

  // arms: inked rims over skin
  const Vec2 sh = fig.shoulder();
  const Vec2 hand_l = fig.limb_end(sh, fig.pose.arm_l, fig.prop.arm_len);
  const Vec2 hand_r = fig.limb_end(sh, fig.pose.arm_r, fig.prop.arm_len);
  p.capsule(sh, hand_l, 1.7, ink);
  p.capsule(sh, hand_r, 1.7, ink);
  p.capsule(sh, hand_l, 1.0, skin);
  p.capsule(sh, hand_r, 1.0, skin);

  // head + hair
  const Vec2 hc = fig.head_center();
  const double r = fig.prop.head_r;
  const double rx = r * (0.4 + 0.6 * std::fabs(fig.sx()));
  const Rgb hcol = hair_color(hair_id);
  switch (hair_id) {
    case 0:  // bun
      p.ellipse(Vec2{hc.x - rx * 0.8, hc.y - r * 1.0}, 2.8, 2.8, hcol);
      break;
    case 1:  // ponytail right
      p.capsule(Vec2{hc.x + rx * 0.8, hc.y - r * 0.2}, Vec2{hc.x + rx * 0.8 + 3.5, hc.y + r + 4.0}, 1.5, hcol);
      break;
    case 2:  // ponytail left
      p.capsule(Vec2{hc.x - rx * 0.8, hc.y - r * 0.2}, Vec2{hc.x - rx * 0.8 - 3.5, hc.y + r + 4.0}, 1.5, hcol);
      break;
    default:  // bob
      p.ellipse(Vec2{hc.x, hc.y - r * 0.45}, rx * 1.35, r * 0.95, hcol);
      break;
  }
  p.ellipse(hc, rx, r, ink);
  p.ellipse(hc, rx - 0.8, r - 0.8, skin);
}

double figure_half_width(const Proportions& p) { return p.arm_len + 3.0; }
double figure_top_extent(const Proportions& p) { return 8.0 + p.neck_len + 2 * p.head_r + 2.5; }
double figure_bottom_extent(const Proportions& p) { return 4.0 + p.leg_len + 2.0; }

void validate_spec_fits(const ClipSpec& spec, int frame_size) {
  if (spec.segments.empty()) throw data_error("clip spec has no segments");
  if (int(spec.segments.size()) > 9) throw data_error("clip spec exceeds 9 segments");
  for (const auto& seg : spec.segments) {
    if (seg.frames < 2) throw data_error("segment must span at least 2 frames");
  }
  const Proportions prop = proportions_for(spec.appearance.limb_seed);
  const double cx = frame_size / 2.0, cy = frame_size / 2.0 + 3.0;
  const Trajectory tr = clip_trajectory(spec);
  // centering makes the reach symmetric about the frame middle
  const double span_x = (tr.max_x - tr.min_x) / 2.0;
  const double span_y = (tr.max_y - tr.min_y) / 2.0;
  const bool ok = cx - figure_half_width(prop) - span_x >= 0.5 &&
                  cx + figure_half_width(prop) + span_x <= frame_size - 0.5 &&
                  cy - figure_top_extent(prop) - span_y >= 0.5 &&
                  cy + figure_bottom_extent(prop) + span_y <= frame_size - 0.5;
  if (!ok) {
    throw data_error("figure leaves the frame: the motion program spans " +
                     std::to_string(tr.max_x - tr.min_x) + " x " +
                     std::to_string(tr.max_y - tr.min_y) + " px, too large for a " +
                     std::to_string(frame_size) + " px frame");
  }
}

// ---- sketch stroke construction -----------------------------------------

Stroke polyline(std::initializer_list<Vec2> pts, bool motion) {
  Stroke s;
  s.is_motion = motion;
  for (const auto& p : pts) s.points.push_back({p.x, p.y});
  return s;
}

void clamp_stroke(Stroke& s, double w, double h) {
  for (auto& p : s.points) {
    p[0] = std::clamp(p[0], 1.0, w - 2.0);
    p[1] = std::clamp(p[1], 1.0, h - 2.0);
  }
}

// Clip the line c + t*d against the symmetric trapezoid in body space.
bool clip_line_to_torso(Vec2 c, Vec2 d, double ny, double hy, double top_hw, double bot_hw,
                        Vec2& out_a, Vec2& out_b) {
  double t_lo = -1e9, t_hi = 1e9;
  auto cut = [&](double a, double b) {  // a + t*b >= 0
    if (std::fabs(b) < 1e-12) return a >= 0;
    const double t = -a / b;
    if (b > 0) t_lo = std::max(t_lo, t);
    else t_hi = std::min(t_hi, t);
    return true;
  };
  if (!cut(c.y - ny, d.y)) return false;
  if (!cut(hy - c.y, -d.y)) return false;
  // side planes: |x| <= hw(y), hw(y) = top_hw + (bot_hw-top_hw)*(y-ny)/(hy-ny)
  const double k = (bot_hw - top_hw) / (hy - ny);
  // right: top_hw + k*(y-ny) - x >= 0
  if (!cut(top_hw + k * (c.y - ny) - c.x, k * d.y - d.x)) return false;
  if (!cut(top_hw + k * (c.y - ny) + c.x, k * d.y + d.x)) return false;
  if (t_lo >= t_hi) return false;
  out_a = Vec2{c.x + t_lo * d.x, c.y + t_lo * d.y};
  out_b = Vec2{c.x + t_hi * d.x, c.y + t_hi * d.y};
  return true;
}

std::vector<Stroke> build_appearance_strokes(const FigureLayout& fig, const Clothing& cloth,
                                             int hair_id) {
  std::vector<Stroke> out;
  const double r = fig.prop.head_r;
  const Vec2 hc = fig.head_center();

  // head circle
  {
    Stroke s;
    s.is_motion = false;
    for (int i = 0; i <= 14; ++i) {
      const double a = 2 * kPi * i / 14.0;
      s.points.push_back({hc.x + r * std::cos(a), hc.y + r * std::sin(a)});
    }
    out.push_back(std::move(s));
  }

  // torso outline
  const double ny = fig.torso_top(), hy = fig.torso_bottom();
  const double top_hw = fig.prop.torso_hw, bot_hw = fig.prop.torso_hw * 0.82;
  {
    const Vec2 a = fig.world(-top_hw, ny), b = fig.world(top_hw, ny);
    const Vec2 c = fig.world(bot_hw, hy), d = fig.world(-bot_hw, hy);
    Stroke s;
    s.is_motion = false;
    s.points = {{a.x, a.y}, {b.x, b.y}, {c.x, c.y}, {d.x, d.y}, {a.x, a.y}};
    out.push_back(std::move(s));
  }

  // limbs
  const Vec2 sh = fig.shoulder(), hip = fig.hip();
  const Vec2 hand_l = fig.limb_end(sh, fig.pose.arm_l, fig.prop.arm_len);
  const Vec2 hand_r = fig.limb_end(sh, fig.pose.arm_r, fig.prop.arm_len);
  const Vec2 foot_l = fig.limb_end(hip, fig.pose.leg_l, fig.prop.leg_len);
  const Vec2 foot_r = fig.limb_end(hip, fig.pose.leg_r, fig.prop.leg_len);
  out.push_back(polyline({sh, hand_l}, false));
  out.push_back(polyline({sh, hand_r}, false));
  out.push_back(polyline({hip, foot_l}, false));
  out.push_back(polyline({hip, foot_r}, false));
  out.push_back(polyline({foot_l, Vec2{foot_l.x + 2.4, foot_l.y}}, false));
  out.push_back(polyline({foot_r, Vec2{foot_r.x + 2.4, foot_r.y}}, false));

  // clothing hatch, clipped to the torso; the line style stands in for the
  // palette that grayscale pages cannot show
  {
    auto hatch_at = [&](double angle_rad, double spacing, bool dashed) {
      const Vec2 dir{std::sin(angle_rad), -std::cos(angle_rad)};
      const Vec2 nrm{std::cos(angle_rad), std::sin(angle_rad)};
      for (int i = -2; i <= 2; ++i) {
        const Vec2 c{nrm.x * i * spacing, -2.0 + nrm.y * i * spacing};
        Vec2 a, b;
        if (!clip_line_to_torso(c, dir, ny + 0.5, hy - 0.5, top_hw - 0.5, bot_hw - 0.5, a, b)) {
          continue;
        }
        if (!dashed) {
          out.push_back(polyline({fig.world(a.x, a.y), fig.world(b.x, b.y)}, false));
        } else {
          // two short dashes along the clipped span
          const Vec2 m1{a.x + (b.x - a.x) * 0.35, a.y + (b.y - a.y) * 0.35};
          const Vec2 m2{a.x + (b.x - a.x) * 0.62, a.y + (b.y - a.y) * 0.62};
          out.push_back(polyline({fig.world(a.x, a.y), fig.world(m1.x, m1.y)}, false));
          out.push_back(polyline({fig.world(m2.x, m2.y), fig.world(b.x, b.y)}, false));
        }
      }
    };
    if (cloth.palette == 0) {
      hatch_at(cloth.angle_rad, cloth.period, false);
    } else {
      hatch_at(cloth.angle_rad, cloth.period, true);  // dashed marks the light palette
    }
  }

  // hair
  const Rgb unused = hair_color(hair_id);
  (void)unused;
  switch (hair_id) {
    case 0: {  // bun
      Stroke s;
      s.is_motion = false;
      for (int i = 0; i <= 8; ++i) {
        const double a = 2 * kPi * i / 8.0;
        s.points.push_back({hc.x - r * 0.8 + 2.8 * std::cos(a), hc.y - r * 1.0 + 2.8 * std::sin(a)});
      }
      out.push_back(std::move(s));
      break;
    }
    case 1:
      out.push_back(polyline({Vec2{hc.x + r * 0.8, hc.y - r * 0.2},
                              Vec2{hc.x + r * 0.8 + 3.5, hc.y + r + 4.0}}, false));
      break;
    case 2:
      out.push_back(polyline({Vec2{hc.x - r * 0.8, hc.y - r * 0.2},
                              Vec2{hc.x - r * 0.8 - 3.5, hc.y + r + 4.0}}, false));
      break;
    default: {  // bob
      Stroke s;
      s.is_motion = false;
      for (int i = 0; i <= 6; ++i) {
        const double a = kPi + kPi * i / 6.0;
        s.points.push_back({hc.x + r * 1.35 * std::cos(a), hc.y - r * 0.45 + r * 0.95 * std::sin(a)});
      }
      out.push_back(std::move(s));
      break;
    }
  }
  return out;
}

void add_arrowhead(std::vector<Stroke>& out, Vec2 tip, Vec2 dir) {
  const double len = std::sqrt(dir.x * dir.x + dir.y * dir.y);
  if (len < 1e-9) dir = Vec2{1, 0};
  else dir = Vec2{dir.x / len, dir.y / len};
  auto wing = [&](double deg) {
    const double a = deg * kPi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    return Vec2{tip.x - 4.5 * (dir.x * ca - dir.y * sa), tip.y - 4.5 * (dir.x * sa + dir.y * ca)};
  };
  out.push_back(polyline({wing(28), tip, wing(-28)}, true));
}

// Motion strokes live in fixed page bands (above any head / below any
// feet), so clips sharing a motion program draw identical motion vectors
// regardless of the skater's proportions.
std::vector<Stroke> build_motion_strokes(const MotionSegment& seg, const StrokeBounds& app_bounds,
                                         double page_w, double page_h) {
  std::vector<Stroke> out;
  const double cx = page_w / 2.0;
  const double above_band = 11.5;
  const double below_band = page_h - 9.5;
  // strokes are pinned to these lines afterwards, independent of proportions
  const double above_anchor = 12.5;           // guaranteed above any head/hair
  const double below_anchor = page_h - 11.0;  // guaranteed below any feet (<= 51.2)
  switch (seg.kind) {
    case SegmentKind::Static:
      break;
    case SegmentKind::Jump: {
      // wide arc above the head, apex height keyed to jump height
      const double base_y = above_band;
      const double apex = std::max(2.0, base_y - 4.5 - seg.speed * 0.45);
      Stroke s;
      s.is_motion = true;
      for (int i = 0; i <= 10; ++i) {
        const double t = i / 10.0;
        const double x = cx - 13.0 + 26.0 * t;
        const double y = base_y - (base_y - apex) * 4.0 * t * (1.0 - t);
        s.points.push_back({x, y});
      }
      const Vec2 tip{cx + 13.0, base_y};
      out.push_back(std::move(s));
      add_arrowhead(out, tip, Vec2{1.0, 1.3});
      break;
    }
    case SegmentKind::Glide: {
      // long shaft at the true direction, vertical reach compressed into
      // the band below the feet
      const double a = seg.angle_deg * kPi / 180.0;
      Vec2 d{std::cos(a), 0.28 * std::sin(a)};
      const double dl = std::sqrt(d.x * d.x + d.y * d.y);
      const double cy = below_band;
      const double half = 14.0 * std::max(0.45, std::fabs(d.x / dl));
      const Vec2 dn{d.x / dl, d.y / dl};
      const Vec2 A{cx - dn.x * half, cy - dn.y * half};
      const Vec2 B{cx + dn.x * half, cy + dn.y * half};
      // a mid-shaft chevron thickens the stroke footprint
      const Vec2 mid{cx + dn.x * half * 0.1, cy + dn.y * half * 0.1};
      out.push_back(polyline({A, mid, B}, true));
      add_arrowhead(out, B, Vec2{std::cos(a), std::sin(a)});
      break;
    }
    case SegmentKind::Spin: {
      // inward spiral read in the winding direction
      const double ey = below_band;
      const bool ccw = seg.speed >= 0;
      Stroke s;
      s.is_motion = true;
      Vec2 last{cx, ey}, prev{cx, ey};
      const int n_pts = 22;
      for (int i = 0; i <= n_pts; ++i) {
        const double t = i / double(n_pts);
        const double sweep = 540.0 * t * kPi / 180.0;
        const double a = (ccw ? sweep : -sweep) + kPi / 2;
        const double rx = 13.5 - 5.5 * t;
        const double ry = 3.4 - 1.2 * t;
        const Vec2 p{cx + rx * std::cos(a), ey + ry * std::sin(a)};
        s.points.push_back({p.x, p.y});
        prev = last;
        last = p;
      }
      out.push_back(std::move(s));
      add_arrowhead(out, last, Vec2{last.x - prev.x, last.y - prev.y});
      break;
    }
  }
  if (!out.empty()) {
    double min_y = 1e9, max_y = -1e9;
    for (const auto& s : out)
      for (const auto& p : s.points) {
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
      }
    const double shift = seg.kind == SegmentKind::Jump ? above_anchor - max_y
                                                       : below_anchor - min_y;
    for (auto& s : out)
      for (auto& p : s.points) p[1] += shift;
  }
  for (auto& s : out) clamp_stroke(s, page_w, page_h);
  return out;
}

json stroke_to_json(const Stroke& s) {
  json j;
  j["is_motion"] = s.is_motion;
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(json::array({p[0], p[1]}));
  j["points"] = pts;
  return j;
}

Stroke stroke_from_json(const json& j) {
  Stroke s;
  s.is_motion = j.at("is_motion").get<bool>();
  for (const auto& p : j.at("points")) {
    s.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return s;
}

std::string page_raster_name(const std::string& sketch_id, int page_index, bool motion) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_page%02d_%s.pgm", sketch_id.c_str(), page_index,
                motion ? "mo" : "ap");
  return buf;
}

}  // namespace

const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Glide: return "glide";
    case SegmentKind::Spin: return "spin";
    case SegmentKind::Jump: return "jump";
    case SegmentKind::Static: return "static";
  }
  return "?";
}

int ClipSpec::total_frames() const {
  int n = 0;
  for (const auto& s : segments) n += s.frames;
  return n;
}

const DatasetEntry& DatasetManifest::entry_for_clip(const std::string& clip_id) const {
  for (const auto& e : entries) {
    if (e.clip_id == clip_id) return e;
  }
  throw data_error("no manifest entry for clip " + clip_id);
}

const DatasetEntry& DatasetManifest::entry_for_sketch(const std::string& sketch_id) const {
  for (const auto& e : entries) {
    if (e.sketch_id == sketch_id) return e;
  }
  throw data_error("no manifest entry for sketch " + sketch_id);
}

void validate_clip_spec(const ClipSpec& spec, int frame_size) {
  validate_spec_fits(spec, frame_size);
}

Tensor render_background(int frame_size) {
  Tensor bg(Shape{3, size_t(frame_size), size_t(frame_size)});
  const double base[3] = {0.93, 0.95, 0.97};
  for (size_t c = 0; c < 3; ++c) {
    const double v = quantize_f32(base[c]);
    for (int y = 0; y < frame_size; ++y) {
      for (int x = 0; x < frame_size; ++x) bg.at3(c, size_t(y), size_t(x)) = v;
    }
  }
  return bg;
}

VideoClip render_video(const ClipSpec& spec, uint64_t seed, int frame_size) {
  (void)seed;  // rendering is fully determined by the spec
  validate_spec_fits(spec, frame_size);
  const Proportions prop = proportions_for(spec.appearance.limb_seed);
  const Clothing cloth = clothing_for(spec.appearance.clothing_id);
  const Tensor bg = render_background(frame_size);

  VideoClip clip;
  clip.fps = 30;
  clip.frames.reserve(size_t(spec.total_frames()));
  const Trajectory tr = clip_trajectory(spec);

  for (size_t si = 0; si < spec.segments.size(); ++si) {
    const MotionSegment& seg = spec.segments[si];
    const Pose target = pose_for(spec.appearance.limb_seed, int(si) + 1);
    const Pose prev = si == 0 ? target : pose_for(spec.appearance.limb_seed, int(si));
    for (int t = 0; t < seg.frames; ++t) {
      Tensor frame = bg;
      FigureLayout fig;
      fig.cx = frame_size / 2.0;
      fig.cy = frame_size / 2.0 + 3.0;
      fig.prop = prop;
      const double blend = si == 0 ? 1.0 : std::min(1.0, (t + 1) / 6.0);
      fig.pose = lerp_pose(prev, target, blend);
      fig.motion = motion_at(seg, t);
      fig.motion.dx += tr.entry[si].x + tr.base.x;
      fig.motion.dy += tr.entry[si].y + tr.base.y;
      paint_figure(frame, fig, cloth, spec.appearance.hair_id);
      quantize_f32(frame);
      clip.frames.push_back(std::move(frame));
    }
  }
  return clip;
}

std::pair<SketchSequence, AlignmentAnnotation> render_sketch_pages(const ClipSpec& spec,
                                                                   uint64_t seed,
                                                                   int frame_size) {
  (void)seed;
  validate_spec_fits(spec, frame_size);
  const Proportions prop = proportions_for(spec.appearance.limb_seed);
  const Clothing cloth = clothing_for(spec.appearance.clothing_id);

  SketchSequence seq;
  AlignmentAnnotation ann;
  int frame_cursor = 1;
  for (size_t si = 0; si < spec.segments.size(); ++si) {
    const MotionSegment& seg = spec.segments[si];
    SketchPage page;
    page.page_index = int(si) + 1;
    page.is_static = seg.kind == SegmentKind::Static;

    FigureLayout fig;
    fig.cx = frame_size / 2.0;
    fig.cy = frame_size / 2.0 + 4.0;
    fig.prop = prop;
    fig.pose = pose_for(spec.appearance.limb_seed, page.page_index);
    fig.motion = MotionState{};  // pages draw the skater centered, unflattened

    page.strokes = build_appearance_strokes(fig, cloth, spec.appearance.hair_id);
    const StrokeBounds app_bounds = stroke_bounds(page.strokes, false);
    auto motion = build_motion_strokes(seg, app_bounds, frame_size, frame_size);
    for (auto& s : motion) page.strokes.push_back(std::move(s));

    page.appearance_raster = rasterize_strokes(page.strokes, frame_size, frame_size, false);
    page.motion_raster = rasterize_strokes(page.strokes, frame_size, frame_size, true);
    seq.pages.push_back(std::move(page));

    ann.intervals.push_back({frame_cursor, frame_cursor + seg.frames - 1});
    frame_cursor += seg.frames;
  }
  return {std::move(seq), std::move(ann)};
}

std::vector<ClipSpec> make_twins(const GenConfig& cfg, uint64_t seed) {
  const int A = cfg.appearance_twin_pairs;
  const int B = cfg.motion_twin_pairs;
  if (A < 0 || B < 0) throw config_error("twin pair counts must be non-negative");
  if (cfg.twin_segments < 1 || cfg.twin_segments > 3) {
    throw config_error("generator.twin_segments must lie in 1..3");
  }
  const int seg_frames = (cfg.segment_frames_min + cfg.segment_frames_max) / 2;
  const int n_seg = cfg.twin_segments;
  // the pair structure is fixed; figures and angle phases vary with the seed
  const uint64_t base = splitmix64(seed);
  const double angle_offset = double(base % 8) * 5.0;

  // Motion vocabulary for the appearance-twin group. Programs are reused
  // across adjacent pairs so no clip's program is unique to it, while
  // consecutive programs always differ in their kind sequence.
  auto g_program = [&](int i, int vocab) {
    std::vector<MotionSegment> segs;
    const double angle = i * 360.0 / vocab + angle_offset;
    const double omega = (i % 4) < 2 ? 0.22 : -0.22;
    if (i % 2 == 0) {
      segs.push_back({SegmentKind::Glide, angle, 0.45, seg_frames});
      segs.push_back({SegmentKind::Spin, 0.0, omega, seg_frames});
      segs.push_back({SegmentKind::Glide, angle + 180.0, 0.45, seg_frames});
    } else {
      segs.push_back({SegmentKind::Jump, 0.0, 6.0, seg_frames});
      segs.push_back({SegmentKind::Glide, angle, 0.45, seg_frames});
      segs.push_back({SegmentKind::Spin, 0.0, omega, seg_frames});
    }
    segs.resize(size_t(std::min(n_seg, int(segs.size()))));
    return segs;
  };
  auto n_program = [&](int i) {
    std::vector<MotionSegment> segs;
    const double angle = i * 360.0 / std::max(1, B) + 180.0 / std::max(1, B) + angle_offset;
    segs.push_back({SegmentKind::Glide, angle, 0.45, seg_frames});
    segs.push_back({SegmentKind::Jump, 0.0, 5.0 + (i % 3) * 0.7, seg_frames});
    segs.push_back({SegmentKind::Spin, 0.0, (i % 2) ? -0.18 : 0.18, seg_frames});
    segs.resize(size_t(std::min(n_seg, int(segs.size()))));
    return segs;
  };
  auto a_spec = [&](int i) {
    return AppearanceSpec{i % 8, i % 4, base + uint64_t(i)};
  };
  auto b_spec = [&](int j) {
    return AppearanceSpec{8 + (j % 8), (j + 1) % 4, base + 1000 + uint64_t(j)};
  };

  std::vector<ClipSpec> out;

  // appearance twins: same appearance, motion programs from adjacent slots
  const int vocab_a = A >= 2 ? (A % 2 == 0 ? A : A + 1) : 2;
  const bool circular_a = A >= 2 && A % 2 == 0;
  for (int i = 0; i < A; ++i) {
    const int ja = i;
    const int jb = circular_a ? (i + 1) % vocab_a : i + 1;
    ClipSpec x, y;
    x.appearance = y.appearance = a_spec(i);
    x.segments = g_program(ja, vocab_a);
    y.segments = g_program(jb, vocab_a);
    x.twin_pair = y.twin_pair = i;
    x.twin_role = y.twin_role = 'a';
    out.push_back(std::move(x));
    out.push_back(std::move(y));
  }

  // motion twins: same program, appearance specs from adjacent slots
  const int vocab_b = B >= 2 ? (B % 2 == 0 ? B : B + 1) : 2;
  const bool circular_b = B >= 2 && B % 2 == 0;
  for (int i = 0; i < B; ++i) {
    const int ja = i;
    const int jb = circular_b ? (i + 1) % vocab_b : i + 1;
    ClipSpec u, w;
    u.segments = w.segments = n_program(i);
    u.appearance = b_spec(ja);
    w.appearance = b_spec(jb);
    u.twin_pair = w.twin_pair = A + i;
    u.twin_role = w.twin_role = 'm';
    out.push_back(std::move(u));
    out.push_back(std::move(w));
  }
  return out;
}

ClipSpec make_plain_spec(const GenConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    ClipSpec spec;
    spec.appearance.clothing_id = int(rng.index(16));
    spec.appearance.hair_id = int(rng.index(4));
    spec.appearance.limb_seed = rng.next_u64();

    // pages per clip
    double total_w = 0;
    for (double w : cfg.page_count_weights) total_w += w;
    double pick = rng.uniform() * total_w;
    int n_pages = 1;
    for (size_t i = 0; i < cfg.page_count_weights.size(); ++i) {
      pick -= cfg.page_count_weights[i];
      if (pick <= 0) {
        n_pages = int(i) + 1;
        break;
      }
      n_pages = int(i) + 1;
    }
    n_pages = std::min(n_pages, 9);

    double drift_x = 0, drift_y = 0;  // glides alternate to keep the path in frame
    for (int p = 0; p < n_pages; ++p) {
      MotionSegment seg;
      seg.frames = int(rng.integer(cfg.segment_frames_min, cfg.segment_frames_max));
      if (rng.uniform() < cfg.static_prob) {
        seg.kind = SegmentKind::Static;
      } else {
        switch (rng.index(3)) {
          case 0: {
            seg.kind = SegmentKind::Glide;
            seg.angle_deg = rng.uniform(0, 360);
            const double cap = 10.0 / std::max(1, seg.frames);
            const double hi = std::min(0.7, cap);
            seg.speed = rng.uniform(std::min(0.4, 0.8 * hi), hi);
            const double a = seg.angle_deg * kPi / 180.0;
            const double sx = seg.speed * std::cos(a) * seg.frames;
            const double sy = seg.speed * std::sin(a) * seg.frames;
            const double keep = std::max(std::fabs(drift_x + sx), std::fabs(drift_y + sy));
            const double flip = std::max(std::fabs(drift_x - sx), std::fabs(drift_y - sy));
            if (flip < keep) seg.angle_deg = std::fmod(seg.angle_deg + 180.0, 360.0);
            const double a2 = seg.angle_deg * kPi / 180.0;
            drift_x += seg.speed * std::cos(a2) * seg.frames;
            drift_y += seg.speed * std::sin(a2) * seg.frames;
            break;
          }
          case 1:
            seg.kind = SegmentKind::Spin;
            seg.speed = (rng.coin() ? 1 : -1) * rng.uniform(0.15, 0.3);
            seg.angle_deg = rng.uniform(0, 360);
            break;
          default:
            seg.kind = SegmentKind::Jump;
            seg.speed = rng.uniform(5.0, 6.8);
            break;
        }
      }
      spec.segments.push_back(seg);
    }
    try {
      validate_spec_fits(spec, cfg.frame_size);
      return spec;
    } catch (const Error&) {
      continue;  // resample; rare with the drift damping above
    }
  }
  throw data_error("could not sample an in-frame clip spec in 8 attempts");
}

uint64_t gen_config_hash(const GenConfig& cfg) {
  RunConfig rc;
  rc.gen = cfg;
  auto kv = rc.to_kv();
  std::string flat;
  for (const auto& [k, v] : kv) {
    if (k.rfind("generator.", 0) == 0) flat += k + "=" + v + "\n";
  }
  return fnv1a64(flat);
}

void save_clip(const fs::path& path, const VideoClip& clip) {
  BinWriter w;
  w.magic("FGSVCLIP");
  w.u32(1);
  w.u32(uint32_t(clip.frames.size()));
  w.u32(uint32_t(clip.frames.empty() ? 0 : clip.frames[0].dim(0)));
  w.u32(uint32_t(clip.frames.empty() ? 0 : clip.frames[0].dim(1)));
  w.u32(uint32_t(clip.frames.empty() ? 0 : clip.frames[0].dim(2)));
  w.u32(uint32_t(clip.fps));
  for (const auto& f : clip.frames) w.f32_array(f.data(), f.size());
  w.save(path);
}

VideoClip load_clip(const fs::path& path, const std::string& id) {
  BinReader r = BinReader::open(path);
  r.magic("FGSVCLIP");
  const uint32_t version = r.u32();
  if (version != 1) throw data_error("unsupported clip format version in " + path.string());
  const uint32_t n = r.u32(), c = r.u32(), h = r.u32(), w = r.u32(), fps = r.u32();
  VideoClip clip;
  clip.id = id;
  clip.fps = int(fps);
  clip.frames.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Tensor f(Shape{c, h, w});
    r.f32_array(f.data(), f.size());
    for (double v : f.values()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw data_error("clip " + id + " has pixel values outside [0, 1] in " + path.string());
      }
    }
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

void save_sketch_json(const fs::path& path, const SketchSequence& seq) {
  json j;
  j["id"] = seq.id;
  j["paired_clip"] = seq.paired_clip_id;
  json pages = json::array();
  for (const auto& p : seq.pages) {
    json pj;
    pj["page_index"] = p.page_index;
    pj["is_static"] = p.is_static;
    json strokes = json::array();
    for (const auto& s : p.strokes) strokes.push_back(stroke_to_json(s));
    pj["strokes"] = strokes;
    pages.push_back(pj);
  }
  j["pages"] = pages;
  write_file_text(path, j.dump(2) + "\n");
}

SketchSequence load_sketch(const fs::path& sketch_json, const fs::path& dataset_root,
                           const DatasetEntry& entry, int frame_size) {
  json j;
  try {
    j = json::parse(read_file_text(sketch_json));
  } catch (const json::exception& e) {
    throw data_error("corrupt sketch file " + sketch_json.string() + ": " + e.what());
  }
  SketchSequence seq;
  seq.id = j.at("id").get<std::string>();
  seq.paired_clip_id = j.at("paired_clip").get<std::string>();
  for (const auto& pj : j.at("pages")) {
    SketchPage p;
    p.page_index = pj.at("page_index").get<int>();
    p.is_static = pj.at("is_static").get<bool>();
    for (const auto& sj : pj.at("strokes")) p.strokes.push_back(stroke_from_json(sj));

    const fs::path ap = dataset_root / "sketches" / page_raster_name(entry.sketch_id, p.page_index, false);
    const fs::path mo = dataset_root / "sketches" / page_raster_name(entry.sketch_id, p.page_index, true);
    p.appearance_raster = read_pgm(ap);
    p.motion_raster = read_pgm(mo);
    if (int(p.appearance_raster.dim(1)) != frame_size) {
      throw data_error("raster size mismatch in " + ap.string());
    }

    bool any_motion_stroke = false;
    for (const auto& s : p.strokes) any_motion_stroke |= s.is_motion;
    bool motion_blank = true;
    for (double v : p.motion_raster.values()) motion_blank &= v == 0.0;
    if (p.is_static != !any_motion_stroke || p.is_static != motion_blank) {
      throw data_error("static flag inconsistent with motion strokes in " + sketch_json.string());
    }
    seq.pages.push_back(std::move(p));
  }
  if (seq.pages.empty() || seq.pages.size() > 9) {
    throw data_error("sketch sequence " + seq.id + " must have 1..9 pages");
  }
  return seq;
}

void save_alignment(const fs::path& path, const AlignmentAnnotation& ann) {
  json j;
  for (size_t i = 0; i < ann.intervals.size(); ++i) {
    j[std::to_string(i + 1)] = json::array({ann.intervals[i][0], ann.intervals[i][1]});
  }
  write_file_text(path, j.dump(2) + "\n");
}

AlignmentAnnotation load_alignment(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::exception& e) {
    throw data_error("corrupt alignment file " + path.string() + ": " + e.what());
  }
  AlignmentAnnotation ann;
  ann.intervals.resize(j.size());
  for (const auto& [key, val] : j.items()) {
    const int page = std::stoi(key);
    if (page < 1 || size_t(page) > ann.intervals.size()) {
      throw data_error("alignment page index out of range in " + path.string());
    }
    ann.intervals[size_t(page - 1)] = {val.at(0).get<int>(), val.at(1).get<int>()};
  }
  int prev_start = 0;
  for (const auto& iv : ann.intervals) {
    if (iv[0] < 1 || iv[1] < iv[0]) throw data_error("bad alignment interval in " + path.string());
    if (iv[0] < prev_start) throw data_error("alignment intervals out of order in " + path.string());
    prev_start = iv[0];
  }
  return ann;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  json j;
  j["format"] = 1;
  j["seed"] = m.seed;
  j["config_hash"] = hex64(m.config_hash);
  j["frame_size"] = m.frame_size;
  json entries = json::array();
  for (const auto& e : m.entries) {
    json ej;
    ej["clip_id"] = e.clip_id;
    ej["sketch_id"] = e.sketch_id;
    ej["split"] = e.split;
    ej["clip_file"] = e.clip_file;
    ej["sketch_file"] = e.sketch_file;
    ej["alignment_file"] = e.alignment_file;
    ej["pages"] = e.pages;
    if (e.twin_pair >= 0) {
      ej["twin"] = {{"pair", e.twin_pair}, {"role", std::string(1, e.twin_role)}};
    }
    entries.push_back(ej);
  }
  j["entries"] = entries;
  write_file_text(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw data_error("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::exception& e) {
    throw data_error("corrupt manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  m.frame_size = j.at("frame_size").get<int>();
  for (const auto& ej : j.at("entries")) {
    DatasetEntry e;
    e.clip_id = ej.at("clip_id").get<std::string>();
    e.sketch_id = ej.at("sketch_id").get<std::string>();
    e.split = ej.at("split").get<std::string>();
    e.clip_file = ej.at("clip_file").get<std::string>();
    e.sketch_file = ej.at("sketch_file").get<std::string>();
    e.alignment_file = ej.at("alignment_file").get<std::string>();
    e.pages = ej.at("pages").get<int>();
    if (ej.contains("twin")) {
      e.twin_pair = ej.at("twin").at("pair").get<int>();
      e.twin_role = ej.at("twin").at("role").get<std::string>()[0];
    }
    m.entries.push_back(std::move(e));
  }
  // duplicate ids are a validation error
  for (size_t i = 0; i < m.entries.size(); ++i) {
    for (size_t k = i + 1; k < m.entries.size(); ++k) {
      if (m.entries[i].clip_id == m.entries[k].clip_id ||
          m.entries[i].sketch_id == m.entries[k].sketch_id) {
        throw data_error("duplicate id in manifest: " + m.entries[i].clip_id);
      }
    }
  }
  return m;
}

DatasetManifest generate_dataset(const GenConfig& cfg, uint64_t seed, const fs::path& out_dir) {
  if (cfg.frame_size < 48) throw config_error("generator.frame_size must be at least 48");
  if (cfg.page_count_weights.size() > 9) {
    throw config_error("generator.page_count_weights supports at most 9 pages");
  }
  const int min_frames = cfg.segment_frames_min;
  if (min_frames < 2 || cfg.segment_frames_max < min_frames) {
    throw config_error("invalid generator segment frame bounds");
  }
  if (min_frames < 2 * cfg.flow_length + 1) {
    // single-segment clips must still admit one full flow stack
    throw config_error("segment_frames_min " + std::to_string(min_frames) +
                       " yields clips shorter than 2L+1 = " + std::to_string(2 * cfg.flow_length + 1));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw data_error("unwritable output directory: " + out_dir.string());
  }
  fs::create_directories(out_dir / "clips");
  fs::create_directories(out_dir / "sketches");
  fs::create_directories(out_dir / "alignments");

  std::vector<ClipSpec> specs;
  for (int i = 0; i < cfg.plain_clips; ++i) {
    Rng rng(seed ^ splitmix64(uint64_t(i)));
    specs.push_back(make_plain_spec(cfg, rng));
  }
  for (auto& s : make_twins(cfg, seed)) specs.push_back(std::move(s));
  if (specs.empty()) throw config_error("generator config produces no clips");

  // split assignment scaled from the reference 350:50:128 proportions
  const size_t n = specs.size();
  std::vector<std::string> split(n, "test");
  {
    const size_t n_train = size_t(std::lround(cfg.split_train * double(n)));
    const size_t n_val = size_t(std::lround(cfg.split_val * double(n)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::substream(seed, "splits");
    for (size_t i = n; i > 1; --i) {
      const size_t k = rng.index(i);
      std::swap(order[i - 1], order[k]);
    }
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train) split[order[i]] = "train";
      else if (i < n_train + n_val) split[order[i]] = "val";
    }
  }

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.config_hash = gen_config_hash(cfg);
  manifest.frame_size = cfg.frame_size;

  for (size_t i = 0; i < n; ++i) {
    char cid[32], sid[32];
    std::snprintf(cid, sizeof cid, "c%04u", unsigned(i));
    std::snprintf(sid, sizeof sid, "s%04u", unsigned(i));
    const uint64_t clip_seed = seed ^ splitmix64(uint64_t(i));

    VideoClip clip = render_video(specs[i], clip_seed, cfg.frame_size);
    clip.id = cid;
    auto [seq, ann] = render_sketch_pages(specs[i], clip_seed, cfg.frame_size);
    seq.id = sid;
    seq.paired_clip_id = cid;

    DatasetEntry e;
    e.clip_id = cid;
    e.sketch_id = sid;
    e.split = split[i];
    e.clip_file = "clips/" + std::string(cid) + ".vclip";
    e.sketch_file = "sketches/" + std::string(sid) + ".json";
    e.alignment_file = "alignments/" + std::string(cid) + ".json";
    e.pages = int(seq.pages.size());
    e.twin_pair = specs[i].twin_pair;
    e.twin_role = specs[i].twin_role;

    save_clip(out_dir / e.clip_file, clip);
    save_sketch_json(out_dir / e.sketch_file, seq);
    for (const auto& page : seq.pages) {
      write_pgm(out_dir / "sketches" / page_raster_name(seq.id, page.page_index, false),
                page.appearance_raster);
      write_pgm(out_dir / "sketches" / page_raster_name(seq.id, page.page_index, true),
                page.motion_raster);
    }
    save_alignment(out_dir / e.alignment_file, ann);
    manifest.entries.push_back(std::move(e));
  }

  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

void save_dataset(const Dataset& ds, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw data_error("unwritable output directory: " + out_dir.string());
  }
  fs::create_directories(out_dir / "clips");
  fs::create_directories(out_dir / "sketches");
  fs::create_directories(out_dir / "alignments");
  for (const auto& e : ds.manifest().entries) {
    save_clip(out_dir / e.clip_file, ds.clip(e.clip_id));
    const SketchSequence& seq = ds.sketch(e.sketch_id);
    save_sketch_json(out_dir / e.sketch_file, seq);
    for (const auto& page : seq.pages) {
      write_pgm(out_dir / "sketches" / page_raster_name(seq.id, page.page_index, false),
                page.appearance_raster);
      write_pgm(out_dir / "sketches" / page_raster_name(seq.id, page.page_index, true),
                page.motion_raster);
    }
    save_alignment(out_dir / e.alignment_file, ds.alignment(e.clip_id));
  }
  save_manifest(out_dir / "manifest.json", ds.manifest());
}

Dataset Dataset::load(const fs::path& root) {
  Dataset d;
  d.root_ = root;
  d.manifest_ = load_manifest(root / "manifest.json");
  for (const auto& e : d.manifest_.entries) {
    for (const auto& f : {e.clip_file, e.sketch_file, e.alignment_file}) {
      if (!fs::exists(root / f)) {
        throw data_error("manifest references absent file: " + (root / f).string());
      }
    }
  }
  return d;
}

const VideoClip& Dataset::clip(const std::string& clip_id) const {
  auto it = clip_cache_.find(clip_id);
  if (it != clip_cache_.end()) return it->second;
  const DatasetEntry& e = manifest_.entry_for_clip(clip_id);
  auto [ins, ok] = clip_cache_.emplace(clip_id, load_clip(root_ / e.clip_file, clip_id));
  (void)ok;
  return ins->second;
}

const SketchSequence& Dataset::sketch(const std::string& sketch_id) const {
  auto it = sketch_cache_.find(sketch_id);
  if (it != sketch_cache_.end()) return it->second;
  const DatasetEntry& e = manifest_.entry_for_sketch(sketch_id);
  auto [ins, ok] = sketch_cache_.emplace(
      sketch_id, load_sketch(root_ / e.sketch_file, root_, e, manifest_.frame_size));
  (void)ok;
  return ins->second;
}

const AlignmentAnnotation& Dataset::alignment(const std::string& clip_id) const {
  auto it = alignment_cache_.find(clip_id);
  if (it != alignment_cache_.end()) return it->second;
  const DatasetEntry& e = manifest_.entry_for_clip(clip_id);
  auto [ins, ok] = alignment_cache_.emplace(clip_id, load_alignment(root_ / e.alignment_file));
  (void)ok;
  return ins->second;
}

std::vector<const DatasetEntry*> Dataset::split_entries(const std::string& split) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : manifest_.entries) {
    if (split == "all" || e.split == split) out.push_back(&e);
  }
  return out;
}

}  // namespace svr
