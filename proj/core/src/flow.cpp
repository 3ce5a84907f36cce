#include "sketchvid/flow.hpp"

#include <algorithm>
#include <cmath>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"

namespace svr {

namespace {

struct Image {
  int h = 0, w = 0;
  std::vector<double> v;

  Image() = default;
  Image(int hh, int ww) : h(hh), w(ww), v(size_t(hh) * size_t(ww), 0.0) {}
  double& at(int y, int x) { return v[size_t(y) * size_t(w) + size_t(x)]; }
  double at(int y, int x) const { return v[size_t(y) * size_t(w) + size_t(x)]; }
  double clamped(int y, int x) const {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return at(y, x);
  }
  double bilinear(double y, double x) const {
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const double a = clamped(y0, x0), b = clamped(y0, x0 + 1);
    const double c = clamped(y0 + 1, x0), d = clamped(y0 + 1, x0 + 1);
    return a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy;
  }
};

Image from_tensor(const Tensor& t) {
  Image im(int(t.dim(t.ndim() - 2)), int(t.dim(t.ndim() - 1)));
  std::copy(t.data(), t.data() + t.size(), im.v.begin());
  return im;
}

// The published parameter defaults assume 0..255 intensities; inputs
// arrive in [0, 1], so the solver works on a rescaled copy.
constexpr double kIntensityScale = 255.0;

Image from_tensor_scaled(const Tensor& t) {
  Image im = from_tensor(t);
  for (auto& v : im.v) v *= kIntensityScale;
  return im;
}

// 5-tap binomial smoothing, then bilinear resample.
Image downscale(const Image& in, int nh, int nw) {
  static const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  Image tmp(in.h, in.w), sm(in.h, in.w);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * in.clamped(y, x + i);
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * tmp.clamped(y + i, x);
      sm.at(y, x) = acc;
    }
  Image out(nh, nw);
  const double sy = double(in.h) / nh, sx = double(in.w) / nw;
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) {
      out.at(y, x) = sm.bilinear((y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
    }
  return out;
}

Image upscale(const Image& in, int nh, int nw, double value_scale) {
  Image out(nh, nw);
  const double sy = double(in.h) / nh, sx = double(in.w) / nw;
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) {
      out.at(y, x) = in.bilinear((y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5) * value_scale;
    }
  return out;
}

void central_gradient(const Image& im, Image& gx, Image& gy) {
  gx = Image(im.h, im.w);
  gy = Image(im.h, im.w);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      gx.at(y, x) = 0.5 * (im.clamped(y, x + 1) - im.clamped(y, x - 1));
      gy.at(y, x) = 0.5 * (im.clamped(y + 1, x) - im.clamped(y - 1, x));
    }
}

double image_energy(const Image& i0, const Image& i1, const Image& u, const Image& v,
                    double lambda) {
  double e = 0.0;
  for (int y = 0; y < i0.h; ++y)
    for (int x = 0; x < i0.w; ++x) {
      const double ux = (x + 1 < i0.w ? u.at(y, x + 1) - u.at(y, x) : 0.0);
      const double uy = (y + 1 < i0.h ? u.at(y + 1, x) - u.at(y, x) : 0.0);
      const double vx = (x + 1 < i0.w ? v.at(y, x + 1) - v.at(y, x) : 0.0);
      const double vy = (y + 1 < i0.h ? v.at(y + 1, x) - v.at(y, x) : 0.0);
      e += std::sqrt(ux * ux + uy * uy) + std::sqrt(vx * vx + vy * vy);
      const double warped = i1.bilinear(y + v.at(y, x), x + u.at(y, x));
      e += lambda * std::fabs(warped - i0.at(y, x));
    }
  return e;
}

void median3(Image& im) {
  Image out(im.h, im.w);
  double window[9];
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= im.h || xx < 0 || xx >= im.w) continue;
          window[n++] = im.at(yy, xx);
        }
      std::sort(window, window + n);
      out.at(y, x) = n % 2 ? window[n / 2] : 0.5 * (window[n / 2 - 1] + window[n / 2]);
    }
  im = std::move(out);
}

// One pyramid level of the fixed-point primal-dual scheme.
void solve_level(const Image& i0, const Image& i1, Image& u, Image& v, const FlowParams& p,
                 std::vector<double>* energy_trace) {
  const int h = i0.h, w = i0.w;
  Image i1x, i1y;
  central_gradient(i1, i1x, i1y);

  Image p11(h, w), p12(h, w), p21(h, w), p22(h, w);
  Image i1w(h, w), i1wx(h, w), i1wy(h, w), grad(h, w), rho_c(h, w);
  const double l_t = p.lambda * p.theta;
  const double taut = p.tau / p.theta;

  double best_energy = image_energy(i0, i1, u, v, p.lambda);
  if (energy_trace) energy_trace->push_back(best_energy);
  Image u_best = u, v_best = v;

  for (int warp = 0; warp < p.warps; ++warp) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double wy = y + v.at(y, x), wx = x + u.at(y, x);
        i1w.at(y, x) = i1.bilinear(wy, wx);
        i1wx.at(y, x) = i1x.bilinear(wy, wx);
        i1wy.at(y, x) = i1y.bilinear(wy, wx);
        const double gx = i1wx.at(y, x), gy = i1wy.at(y, x);
        grad.at(y, x) = gx * gx + gy * gy;
        rho_c.at(y, x) = i1w.at(y, x) - gx * u.at(y, x) - gy * v.at(y, x) - i0.at(y, x);
      }

    for (int iter = 0; iter < p.iterations; ++iter) {
      // data-term thresholding into the auxiliary flow
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double rho = rho_c.at(y, x) + i1wx.at(y, x) * u.at(y, x) +
                             i1wy.at(y, x) * v.at(y, x);
          const double g = grad.at(y, x);
          double du, dv;
          if (rho < -l_t * g) {
            du = l_t * i1wx.at(y, x);
            dv = l_t * i1wy.at(y, x);
          } else if (rho > l_t * g) {
            du = -l_t * i1wx.at(y, x);
            dv = -l_t * i1wy.at(y, x);
          } else if (g > 1e-12) {
            du = -rho * i1wx.at(y, x) / g;
            dv = -rho * i1wy.at(y, x) / g;
          } else {
            du = dv = 0.0;
          }
          // primal update folds in the divergence of the dual field
          const double divp1 = (x > 0 ? p11.at(y, x) - p11.at(y, x - 1) : p11.at(y, x)) +
                               (y > 0 ? p12.at(y, x) - p12.at(y - 1, x) : p12.at(y, x));
          const double divp2 = (x > 0 ? p21.at(y, x) - p21.at(y, x - 1) : p21.at(y, x)) +
                               (y > 0 ? p22.at(y, x) - p22.at(y - 1, x) : p22.at(y, x));
          u.at(y, x) = u.at(y, x) + du + p.theta * divp1;
          v.at(y, x) = v.at(y, x) + dv + p.theta * divp2;
        }
      // dual ascent with reprojection
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double ux = (x + 1 < w ? u.at(y, x + 1) - u.at(y, x) : 0.0);
          const double uy = (y + 1 < h ? u.at(y + 1, x) - u.at(y, x) : 0.0);
          const double vx = (x + 1 < w ? v.at(y, x + 1) - v.at(y, x) : 0.0);
          const double vy = (y + 1 < h ? v.at(y + 1, x) - v.at(y, x) : 0.0);
          const double nu = 1.0 + taut * std::sqrt(ux * ux + uy * uy);
          const double nv = 1.0 + taut * std::sqrt(vx * vx + vy * vy);
          p11.at(y, x) = (p11.at(y, x) + taut * ux) / nu;
          p12.at(y, x) = (p12.at(y, x) + taut * uy) / nu;
          p21.at(y, x) = (p21.at(y, x) + taut * vx) / nv;
          p22.at(y, x) = (p22.at(y, x) + taut * vy) / nv;
        }
    }
    if (p.median_filter) {
      median3(u);
      median3(v);
    }
    const double e = image_energy(i0, i1, u, v, p.lambda);
    if (e <= best_energy) {
      best_energy = e;
      u_best = u;
      v_best = v;
      if (energy_trace) energy_trace->push_back(e);
    } else {
      // a warp that raises the objective is discarded; later warps would
      // only re-linearize around the same rejected point
      u = u_best;
      v = v_best;
      break;
    }
  }
  u = u_best;
  v = v_best;
}

}  // namespace

Tensor luminance(const Tensor& rgb_frame) {
  if (rgb_frame.ndim() == 2) {
    return rgb_frame;
  }
  if (rgb_frame.ndim() == 3 && rgb_frame.dim(0) == 1) {
    Tensor out(Shape{rgb_frame.dim(1), rgb_frame.dim(2)});
    std::copy(rgb_frame.data(), rgb_frame.data() + out.size(), out.data());
    return out;
  }
  if (rgb_frame.ndim() != 3 || rgb_frame.dim(0) != 3) {
    throw data_error("luminance expects a 3 x H x W frame, got " + shape_str(rgb_frame.shape()));
  }
  const size_t h = rgb_frame.dim(1), w = rgb_frame.dim(2);
  Tensor out(Shape{h, w});
  for (size_t i = 0; i < h * w; ++i) {
    out[i] = 0.299 * rgb_frame[i] + 0.587 * rgb_frame[h * w + i] + 0.114 * rgb_frame[2 * h * w + i];
  }
  return out;
}

FlowField tvl1_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowParams& params,
                    std::vector<double>* energy_trace) {
  if (!frame_a.same_shape(frame_b)) {
    throw data_error("tvl1_flow frames differ in shape: " + shape_str(frame_a.shape()) + " vs " +
                     shape_str(frame_b.shape()));
  }
  const Tensor ga = luminance(frame_a);
  const Tensor gb = luminance(frame_b);
  for (double x : ga.values()) {
    if (!(x >= 0.0 && x <= 1.0)) throw data_error("tvl1_flow expects values in [0, 1]");
  }
  const int h = int(ga.dim(0)), w = int(ga.dim(1));
  if (std::min(h, w) < (1 << params.pyramid_levels)) {
    throw data_error("frames smaller than 2^pyramid_levels: " + std::to_string(std::min(h, w)) +
                     " < " + std::to_string(1 << params.pyramid_levels));
  }
  if (!(params.scale > 0.0 && params.scale < 1.0)) {
    throw config_error("flow.scale must lie in (0, 1)");
  }

  // build pyramids, level 0 finest
  std::vector<Image> pyr_a, pyr_b;
  pyr_a.push_back(from_tensor_scaled(ga));
  pyr_b.push_back(from_tensor_scaled(gb));
  for (int lv = 1; lv < params.pyramid_levels; ++lv) {
    const Image& prev = pyr_a.back();
    const int nh = std::max(4, int(std::lround(prev.h * params.scale)));
    const int nw = std::max(4, int(std::lround(prev.w * params.scale)));
    pyr_a.push_back(downscale(pyr_a.back(), nh, nw));
    pyr_b.push_back(downscale(pyr_b.back(), nh, nw));
  }

  Image u(pyr_a.back().h, pyr_a.back().w), v(pyr_a.back().h, pyr_a.back().w);
  for (int lv = params.pyramid_levels - 1; lv >= 0; --lv) {
    solve_level(pyr_a[size_t(lv)], pyr_b[size_t(lv)], u, v, params,
                lv == 0 ? energy_trace : nullptr);
    if (lv > 0) {
      const Image& next = pyr_a[size_t(lv - 1)];
      const double value_scale = double(next.w) / u.w;
      u = upscale(u, next.h, next.w, value_scale);
      v = upscale(v, next.h, next.w, double(next.h) / double(pyr_a[size_t(lv)].h));
    }
  }

  FlowField out;
  out.u = Tensor(Shape{size_t(h), size_t(w)});
  out.v = Tensor(Shape{size_t(h), size_t(w)});
  const double cap = params.max_displacement;
  for (size_t i = 0; i < out.u.size(); ++i) {
    out.u[i] = std::clamp(u.v[i], -cap, cap);
    out.v[i] = std::clamp(v.v[i], -cap, cap);
  }
  out.u.require_finite("tvl1 flow u");
  out.v.require_finite("tvl1 flow v");
  return out;
}

double tvl1_energy(const Tensor& frame_a, const Tensor& frame_b, const FlowField& flow,
                   double lambda) {
  const Image i0 = from_tensor_scaled(luminance(frame_a));
  const Image i1 = from_tensor_scaled(luminance(frame_b));
  const Image u = from_tensor(flow.u);
  const Image v = from_tensor(flow.v);
  return image_energy(i0, i1, u, v, lambda);
}

FlowStack stack_flows(const VideoClip& clip, int start_frame, int stack_length,
                      const FlowParams& params) {
  const int O = int(clip.frames.size());
  if (start_frame < 1 || start_frame + stack_length > O) {
    throw data_error("insufficient frames for flow stack: start " + std::to_string(start_frame) +
                     " + L " + std::to_string(stack_length) + " exceeds clip length " +
                     std::to_string(O));
  }
  const size_t h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  FlowStack out;
  out.start_frame = start_frame;
  out.channels = Tensor(Shape{size_t(2 * stack_length), h, w});
  for (int k = 0; k < stack_length; ++k) {
    const FlowField f = tvl1_flow(clip.frames[size_t(start_frame - 1 + k)],
                                  clip.frames[size_t(start_frame + k)], params);
    std::copy(f.u.data(), f.u.data() + h * w, out.channels.data() + size_t(2 * k) * h * w);
    std::copy(f.v.data(), f.v.data() + h * w, out.channels.data() + size_t(2 * k + 1) * h * w);
  }
  return out;
}

FlowCache::FlowCache(fs::path dir, FlowParams params)
    : dir_(std::move(dir)), params_(std::move(params)), params_hash_(params_.digest()) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
}

fs::path FlowCache::cache_file(const std::string& clip_id) const {
  return dir_ / ("flow_" + clip_id + "_" + hex64(params_hash_) + ".fcache");
}

const std::vector<FlowField>& FlowCache::pair_flows(const VideoClip& clip) const {
  auto it = memory_.find(clip.id);
  if (it != memory_.end()) return it->second;

  const size_t n_pairs = clip.frames.size() - 1;
  const size_t h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  const fs::path file = cache_file(clip.id);

  if (fs::exists(file)) {
    try {
      BinReader r = BinReader::open(file);
      r.magic("FGSVFLOW");
      if (r.u32() != 1) throw data_error("flow cache version mismatch in " + file.string());
      if (r.u64() != params_hash_) throw data_error("flow cache params mismatch in " + file.string());
      const uint32_t np = r.u32(), fh = r.u32(), fw = r.u32();
      if (np != n_pairs || fh != h || fw != w) {
        throw data_error("flow cache dims mismatch in " + file.string());
      }
      std::vector<FlowField> flows;
      flows.reserve(np);
      for (uint32_t i = 0; i < np; ++i) {
        FlowField f;
        f.u = Tensor(Shape{h, w});
        f.v = Tensor(Shape{h, w});
        r.f32_array(f.u.data(), f.u.size());
        r.f32_array(f.v.data(), f.v.size());
        flows.push_back(std::move(f));
      }
      ++file_hits_;
      auto [ins, ok] = memory_.emplace(clip.id, std::move(flows));
      (void)ok;
      return ins->second;
    } catch (const Error& e) {
      warnings_.push_back("flow cache recompute for clip " + clip.id + ": " + e.what());
    }
  }

  std::vector<FlowField> flows;
  flows.reserve(n_pairs);
  for (size_t i = 0; i < n_pairs; ++i) {
    FlowField f = tvl1_flow(clip.frames[i], clip.frames[i + 1], params_);
    quantize_f32(f.u);
    quantize_f32(f.v);
    flows.push_back(std::move(f));
    ++pairs_computed_;
  }

  BinWriter wtr;
  wtr.magic("FGSVFLOW");
  wtr.u32(1);
  wtr.u64(params_hash_);
  wtr.u32(uint32_t(n_pairs));
  wtr.u32(uint32_t(h));
  wtr.u32(uint32_t(w));
  for (const auto& f : flows) {
    wtr.f32_array(f.u.data(), f.u.size());
    wtr.f32_array(f.v.data(), f.v.size());
  }
  wtr.save(file);

  auto [ins, ok] = memory_.emplace(clip.id, std::move(flows));
  (void)ok;
  return ins->second;
}

FlowStack FlowCache::stack(const VideoClip& clip, int start_frame, int stack_length) const {
  const int O = int(clip.frames.size());
  if (start_frame < 1 || start_frame + stack_length > O) {
    throw data_error("insufficient frames for flow stack: start " + std::to_string(start_frame) +
                     " + L " + std::to_string(stack_length) + " exceeds clip length " +
                     std::to_string(O));
  }
  const auto& flows = pair_flows(clip);
  const size_t h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  FlowStack out;
  out.start_frame = start_frame;
  out.channels = Tensor(Shape{size_t(2 * stack_length), h, w});
  for (int k = 0; k < stack_length; ++k) {
    const FlowField& f = flows[size_t(start_frame - 1 + k)];
    std::copy(f.u.data(), f.u.data() + h * w, out.channels.data() + size_t(2 * k) * h * w);
    std::copy(f.v.data(), f.v.data() + h * w, out.channels.data() + size_t(2 * k + 1) * h * w);
  }
  return out;
}

std::vector<FlowStack> FlowCache::all_stacks(const VideoClip& clip, int stack_length) const {
  const int O = int(clip.frames.size());
  std::vector<FlowStack> out;
  for (int start = 1; start + stack_length <= O; ++start) {
    out.push_back(stack(clip, start, stack_length));
  }
  return out;
}

}  // namespace svr
