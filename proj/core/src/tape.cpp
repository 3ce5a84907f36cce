#include "sketchvid/tape.hpp"

#include <cmath>
#include <unordered_map>

#include "sketchvid/errors.hpp"

namespace svr {

namespace {

size_t conv_out_dim(size_t in, size_t k, size_t stride, size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void check_conv_shapes(const Tensor& input, const Tensor& filters, size_t stride, size_t padding) {
  if (input.ndim() != 3) {
    throw data_error("conv2d expects C_in x H x W input, got " + shape_str(input.shape()));
  }
  if (filters.ndim() != 4) {
    throw data_error("conv2d expects C_out x C_in x k x k filters, got " + shape_str(filters.shape()));
  }
  if (filters.dim(2) != filters.dim(3)) {
    throw data_error("conv2d kernels must be square, got " + shape_str(filters.shape()));
  }
  if (filters.dim(1) != input.dim(0)) {
    throw data_error("conv2d channel mismatch: input " + shape_str(input.shape()) +
                     " vs filters " + shape_str(filters.shape()));
  }
  if (stride == 0) throw data_error("conv2d stride must be positive");
  const size_t k = filters.dim(2);
  if (k > input.dim(1) + 2 * padding || k > input.dim(2) + 2 * padding) {
    throw data_error("conv2d kernel " + std::to_string(k) + " exceeds padded input " +
                     shape_str(input.shape()) + " with padding " + std::to_string(padding));
  }
}

// Valid output-column range for a given kernel column offset.
inline void ox_range(long kx, long pad, long in_w, long stride, long out_w, long& lo, long& hi) {
  const long off = kx - pad;  // ix = ox*stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const long t = in_w - 1 - off;
  hi = t < 0 ? 0 : std::min(out_w, t / stride + 1);
  if (lo > hi) lo = hi;
}

// Patch matrix layout: row q = (ci, ky, kx), column = output position.
void im2col(const double* __restrict__ in, long c_in, long h, long w, long k, long s, long p,
            long oh, long ow, double* __restrict__ col) {
  for (long ci = 0; ci < c_in; ++ci) {
    const double* iplane = in + ci * h * w;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx) {
        double* crow = col + ((ci * k + ky) * k + kx) * oh * ow;
        long lo, hi;
        ox_range(kx, p, w, s, ow, lo, hi);
        for (long oy = 0; oy < oh; ++oy) {
          const long iy = oy * s + ky - p;
          double* cdst = crow + oy * ow;
          if (iy < 0 || iy >= h) {
            for (long ox = 0; ox < ow; ++ox) cdst[ox] = 0.0;
            continue;
          }
          const double* irow = iplane + iy * w + (kx - p);
          for (long ox = 0; ox < lo; ++ox) cdst[ox] = 0.0;
          for (long ox = lo; ox < hi; ++ox) cdst[ox] = irow[ox * s];
          for (long ox = hi; ox < ow; ++ox) cdst[ox] = 0.0;
        }
      }
    }
  }
}

void col2im_add(const double* __restrict__ col, long c_in, long h, long w, long k, long s, long p,
                long oh, long ow, double* __restrict__ gin) {
  for (long ci = 0; ci < c_in; ++ci) {
    double* gplane = gin + ci * h * w;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx) {
        const double* crow = col + ((ci * k + ky) * k + kx) * oh * ow;
        long lo, hi;
        ox_range(kx, p, w, s, ow, lo, hi);
        for (long oy = 0; oy < oh; ++oy) {
          const long iy = oy * s + ky - p;
          if (iy < 0 || iy >= h) continue;
          double* grow = gplane + iy * w + (kx - p);
          const double* csrc = crow + oy * ow;
          for (long ox = lo; ox < hi; ++ox) grow[ox * s] += csrc[ox];
        }
      }
    }
  }
}

// C[M x N] += A[M x K] * B[K x N], K blocked by 4 to keep C-row traffic low
void gemm_acc(long M, long K, long N, const double* __restrict__ A, const double* __restrict__ B,
              double* __restrict__ C) {
  for (long m = 0; m < M; ++m) {
    double* __restrict__ crow = C + m * N;
    const double* arow = A + m * K;
    long k = 0;
    for (; k + 4 <= K; k += 4) {
      const double a0 = arow[k], a1 = arow[k + 1], a2 = arow[k + 2], a3 = arow[k + 3];
      const double* __restrict__ b0 = B + k * N;
      const double* __restrict__ b1 = b0 + N;
      const double* __restrict__ b2 = b1 + N;
      const double* __restrict__ b3 = b2 + N;
      for (long n = 0; n < N; ++n) {
        crow[n] += a0 * b0[n] + a1 * b1[n] + a2 * b2[n] + a3 * b3[n];
      }
    }
    for (; k < K; ++k) {
      const double a = arow[k];
      const double* __restrict__ brow = B + k * N;
      for (long n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

// C[M x K] += A[M x N] * B[K x N]^T  (rows dotted against rows)
void gemm_abt_acc(long M, long K, long N, const double* __restrict__ A,
                  const double* __restrict__ B, double* __restrict__ C) {
  for (long m = 0; m < M; ++m) {
    const double* __restrict__ arow = A + m * N;
    double* crow = C + m * K;
    long k = 0;
    for (; k + 4 <= K; k += 4) {
      const double* __restrict__ b0 = B + k * N;
      const double* __restrict__ b1 = b0 + N;
      const double* __restrict__ b2 = b1 + N;
      const double* __restrict__ b3 = b2 + N;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (long n = 0; n < N; ++n) {
        const double a = arow[n];
        s0 += a * b0[n];
        s1 += a * b1[n];
        s2 += a * b2[n];
        s3 += a * b3[n];
      }
      crow[k] += s0;
      crow[k + 1] += s1;
      crow[k + 2] += s2;
      crow[k + 3] += s3;
    }
    for (; k < K; ++k) {
      const double* __restrict__ brow = B + k * N;
      double acc = 0.0;
      for (long n = 0; n < N; ++n) acc += arow[n] * brow[n];
      crow[k] += acc;
    }
  }
}

// C[K x N] += A[M x K]^T * B[M x N], M blocked by 4
void gemm_atb_acc(long M, long K, long N, const double* __restrict__ A,
                  const double* __restrict__ B, double* __restrict__ C) {
  long m = 0;
  for (; m + 4 <= M; m += 4) {
    const double* a0 = A + m * K;
    const double* a1 = a0 + K;
    const double* a2 = a1 + K;
    const double* a3 = a2 + K;
    const double* __restrict__ b0 = B + m * N;
    const double* __restrict__ b1 = b0 + N;
    const double* __restrict__ b2 = b1 + N;
    const double* __restrict__ b3 = b2 + N;
    for (long k = 0; k < K; ++k) {
      const double w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
      double* __restrict__ crow = C + k * N;
      for (long n = 0; n < N; ++n) {
        crow[n] += w0 * b0[n] + w1 * b1[n] + w2 * b2[n] + w3 * b3[n];
      }
    }
  }
  for (; m < M; ++m) {
    const double* arow = A + m * K;
    const double* __restrict__ brow = B + m * N;
    for (long k = 0; k < K; ++k) {
      const double a = arow[k];
      if (a == 0.0) continue;
      double* __restrict__ crow = C + k * N;
      for (long n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

}  // namespace

namespace kernels {

Tensor conv2d(const Tensor& input, const Tensor& filters, size_t stride, size_t padding) {
  check_conv_shapes(input, filters, stride, padding);
  const long c_in = long(input.dim(0)), h = long(input.dim(1)), w = long(input.dim(2));
  const long c_out = long(filters.dim(0)), k = long(filters.dim(2));
  const long s = long(stride), p = long(padding);
  const long oh = long(conv_out_dim(input.dim(1), filters.dim(2), stride, padding));
  const long ow = long(conv_out_dim(input.dim(2), filters.dim(2), stride, padding));

  Tensor out(Shape{size_t(c_out), size_t(oh), size_t(ow)});
  thread_local std::vector<double> col;
  col.resize(size_t(c_in * k * k) * size_t(oh * ow));
  im2col(input.data(), c_in, h, w, k, s, p, oh, ow, col.data());
  gemm_acc(c_out, c_in * k * k, oh * ow, filters.data(), col.data(), out.data());
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 1 || w.ndim() != 2 || b.ndim() != 1) {
    throw data_error("linear expects 1-D input, 2-D weight, 1-D bias");
  }
  const size_t d_in = x.dim(0), d_out = w.dim(0);
  if (w.dim(1) != d_in || b.dim(0) != d_out) {
    throw data_error("linear shape mismatch: x " + shape_str(x.shape()) + ", w " +
                     shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  Tensor out(Shape{d_out});
  const double* xv = x.data();
  const double* wv = w.data();
  for (size_t o = 0; o < d_out; ++o) {
    const double* row = wv + o * d_in;
    double acc = b[o];
    for (size_t i = 0; i < d_in; ++i) acc += row[i] * xv[i];
    out[o] = acc;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 3) throw data_error("global_avg_pool expects C x H x W, got " + shape_str(x.shape()));
  const size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out(Shape{c});
  const double* v = x.data();
  for (size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const double* plane = v + ch * hw;
    for (size_t i = 0; i < hw; ++i) acc += plane[i];
    out[ch] = acc / double(hw);
  }
  return out;
}

}  // namespace kernels

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || size_t(v.id) >= nodes_.size()) throw data_error("invalid tape variable");
  return nodes_[size_t(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || size_t(v.id) >= nodes_.size()) throw data_error("invalid tape variable");
  return nodes_[size_t(v.id)];
}

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size() - 1)};
}

Var Tape::input(Tensor value) {
  value.require_finite("tape input");
  return push(std::move(value), nullptr);
}

Var Tape::param(Parameter& p) {
  // Reusing one node per Parameter keeps shared branches literally shared.
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf_param == &p) return Var{int(i)};
  }
  Node n;
  n.value = p.value;
  n.leaf_param = &p;
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size() - 1)};
}

Var Tape::conv2d(Var input, Var filters, size_t stride, size_t padding) {
  const Tensor& x = node(input).value;
  const Tensor& f = node(filters).value;
  Tensor out = kernels::conv2d(x, f, stride, padding);
  const int xi = input.id, fi = filters.id;
  // constant leaves never consume their gradient; skip the expensive part
  const bool skip_input_grad =
      node(input).back == nullptr && node(input).leaf_param == nullptr;
  Var v = push(std::move(out), nullptr);
  const int vi = v.id;
  nodes_[size_t(vi)].back = [xi, fi, vi, stride, padding, skip_input_grad](Tape& t) {
    const Tensor& gout = t.nodes_[size_t(vi)].grad;
    const Tensor& x = t.nodes_[size_t(xi)].value;
    const Tensor& f = t.nodes_[size_t(fi)].value;
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    Tensor& gf = t.nodes_[size_t(fi)].grad;

    const long c_in = long(x.dim(0)), h = long(x.dim(1)), w = long(x.dim(2));
    const long c_out = long(f.dim(0)), k = long(f.dim(2));
    const long s = long(stride), p = long(padding);
    const long oh = long(gout.dim(1)), ow = long(gout.dim(2));
    const long patch = c_in * k * k, n_pos = oh * ow;

    thread_local std::vector<double> col;
    col.resize(size_t(patch) * size_t(n_pos));
    im2col(x.data(), c_in, h, w, k, s, p, oh, ow, col.data());
    // gf[co][q] += sum_pos gout[co][pos] * col[q][pos]
    gemm_abt_acc(c_out, patch, n_pos, gout.data(), col.data(), gf.data());
    if (!skip_input_grad) {
      // gcol[q][pos] = sum_co f[co][q] * gout[co][pos], scattered back
      thread_local std::vector<double> gcol;
      gcol.assign(size_t(patch) * size_t(n_pos), 0.0);
      gemm_atb_acc(c_out, patch, n_pos, f.data(), gout.data(), gcol.data());
      col2im_add(gcol.data(), c_in, h, w, k, s, p, oh, ow, gx.data());
    }
  };
  return v;
}

Var Tape::relu(Var x) {
  Tensor out = kernels::relu(node(x).value);
  Var v = push(std::move(out), nullptr);
  const int xi = x.id, vi = v.id;
  nodes_[size_t(vi)].back = [xi, vi](Tape& t) {
    const Tensor& gout = t.nodes_[size_t(vi)].grad;
    const Tensor& xin = t.nodes_[size_t(xi)].value;
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    for (size_t i = 0; i < gout.size(); ++i) {
      if (xin[i] > 0.0) gx[i] += gout[i];
    }
  };
  return v;
}

Var Tape::linear(Var x, Var w, Var b) {
  Tensor out = kernels::linear(node(x).value, node(w).value, node(b).value);
  Var v = push(std::move(out), nullptr);
  const int xi = x.id, wi = w.id, bi = b.id, vi = v.id;
  nodes_[size_t(vi)].back = [xi, wi, bi, vi](Tape& t) {
    const Tensor& gout = t.nodes_[size_t(vi)].grad;
    const Tensor& xin = t.nodes_[size_t(xi)].value;
    const Tensor& win = t.nodes_[size_t(wi)].value;
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    Tensor& gw = t.nodes_[size_t(wi)].grad;
    Tensor& gb = t.nodes_[size_t(bi)].grad;
    const size_t d_out = win.dim(0), d_in = win.dim(1);
    for (size_t o = 0; o < d_out; ++o) {
      const double g = gout[o];
      if (g == 0.0) continue;
      const double* wrow = win.data() + o * d_in;
      double* gwrow = gw.data() + o * d_in;
      for (size_t i = 0; i < d_in; ++i) {
        gx[i] += g * wrow[i];
        gwrow[i] += g * xin[i];
      }
      gb[o] += g;
    }
  };
  return v;
}

Var Tape::global_avg_pool(Var x) {
  Tensor out = kernels::global_avg_pool(node(x).value);
  Var v = push(std::move(out), nullptr);
  const int xi = x.id, vi = v.id;
  nodes_[size_t(vi)].back = [xi, vi](Tape& t) {
    const Tensor& gout = t.nodes_[size_t(vi)].grad;
    const Tensor& xin = t.nodes_[size_t(xi)].value;
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    const size_t c = xin.dim(0), hw = xin.dim(1) * xin.dim(2);
    for (size_t ch = 0; ch < c; ++ch) {
      const double g = gout[ch] / double(hw);
      double* plane = gx.data() + ch * hw;
      for (size_t i = 0; i < hw; ++i) plane[i] += g;
    }
  };
  return v;
}

Var Tape::softmax_cross_entropy(Var scores, const Tensor& one_hot_target) {
  const Tensor& s = node(scores).value;
  if (s.ndim() != 1) throw data_error("softmax_cross_entropy expects 1-D scores");
  if (!one_hot_target.same_shape(s)) {
    throw data_error("softmax_cross_entropy target shape " + shape_str(one_hot_target.shape()) +
                     " does not match scores " + shape_str(s.shape()));
  }
  size_t ones = 0;
  size_t true_index = 0;
  for (size_t i = 0; i < one_hot_target.size(); ++i) {
    const double v = one_hot_target[i];
    if (v == 1.0) {
      ones++;
      true_index = i;
    } else if (v != 0.0) {
      throw data_error("malformed one-hot target: entry " + std::to_string(i) + " is " + std::to_string(v));
    }
  }
  if (ones != 1) throw data_error("malformed one-hot target: " + std::to_string(ones) + " entries set");

  const size_t n = s.size();
  double mx = s[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, s[i]);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) sum += std::exp(s[i] - mx);
  const double log_sum = std::log(sum) + mx;
  Tensor out(Shape{1});
  out[0] = log_sum - s[true_index];

  Var v = push(std::move(out), nullptr);
  const int si = scores.id, vi = v.id;
  nodes_[size_t(vi)].back = [si, vi, mx, sum, true_index](Tape& t) {
    const double g = t.nodes_[size_t(vi)].grad[0];
    const Tensor& sv = t.nodes_[size_t(si)].value;
    Tensor& gs = t.nodes_[size_t(si)].grad;
    for (size_t i = 0; i < sv.size(); ++i) {
      const double p = std::exp(sv[i] - mx) / sum;
      gs[i] += g * (p - (i == true_index ? 1.0 : 0.0));
    }
  };
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw data_error("add shape mismatch: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Var v = push(std::move(out), nullptr);
  const int ai = a.id, bi = b.id, vi = v.id;
  nodes_[size_t(vi)].back = [ai, bi, vi](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    Tensor& ga = t.nodes_[size_t(ai)].grad;
    Tensor& gb = t.nodes_[size_t(bi)].grad;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return v;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw data_error("sub shape mismatch: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Var v = push(std::move(out), nullptr);
  const int ai = a.id, bi = b.id, vi = v.id;
  nodes_[size_t(vi)].back = [ai, bi, vi](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    Tensor& ga = t.nodes_[size_t(ai)].grad;
    Tensor& gb = t.nodes_[size_t(bi)].grad;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return v;
}

Var Tape::scale(Var a, double c) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  Var v = push(std::move(out), nullptr);
  const int ai = a.id, vi = v.id;
  nodes_[size_t(vi)].back = [ai, vi, c](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    Tensor& ga = t.nodes_[size_t(ai)].grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  };
  return v;
}

Var Tape::add_const(Var a, double c) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  Var v = push(std::move(out), nullptr);
  const int ai = a.id, vi = v.id;
  nodes_[size_t(vi)].back = [ai, vi](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    Tensor& ga = t.nodes_[size_t(ai)].grad;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return v;
}

Var Tape::add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw data_error("add_n needs at least one input");
  const Tensor& first = node(xs[0]).value;
  Tensor out(first.shape());
  for (Var x : xs) {
    const Tensor& xv = node(x).value;
    if (!xv.same_shape(first)) throw data_error("add_n shape mismatch");
    for (size_t i = 0; i < out.size(); ++i) out[i] += xv[i];
  }
  Var v = push(std::move(out), nullptr);
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (Var x : xs) ids.push_back(x.id);
  const int vi = v.id;
  nodes_[size_t(vi)].back = [ids, vi](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    for (int id : ids) {
      Tensor& gx = t.nodes_[size_t(id)].grad;
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  };
  return v;
}

Var Tape::sum(Var x) {
  const Tensor& xv = node(x).value;
  double acc = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  Tensor out(Shape{1});
  out[0] = acc;
  Var v = push(std::move(out), nullptr);
  const int xi = x.id, vi = v.id;
  nodes_[size_t(vi)].back = [xi, vi](Tape& t) {
    const double g = t.nodes_[size_t(vi)].grad[0];
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  };
  return v;
}

Var Tape::sum_squares(Var x) {
  const Tensor& xv = node(x).value;
  double acc = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) acc += xv[i] * xv[i];
  Tensor out(Shape{1});
  out[0] = acc;
  Var v = push(std::move(out), nullptr);
  const int xi = x.id, vi = v.id;
  nodes_[size_t(vi)].back = [xi, vi](Tape& t) {
    const double g = t.nodes_[size_t(vi)].grad[0];
    const Tensor& xin = t.nodes_[size_t(xi)].value;
    Tensor& gx = t.nodes_[size_t(xi)].grad;
    for (size_t i = 0; i < xin.size(); ++i) gx[i] += 2.0 * g * xin[i];
  };
  return v;
}

Var Tape::concat(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.ndim() != 1 || bv.ndim() != 1) throw data_error("concat expects 1-D tensors");
  Tensor out(Shape{av.size() + bv.size()});
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i];
  for (size_t i = 0; i < bv.size(); ++i) out[av.size() + i] = bv[i];
  Var v = push(std::move(out), nullptr);
  const int ai = a.id, bi = b.id, vi = v.id;
  const size_t na = av.size();
  nodes_[size_t(vi)].back = [ai, bi, vi, na](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    Tensor& ga = t.nodes_[size_t(ai)].grad;
    Tensor& gb = t.nodes_[size_t(bi)].grad;
    for (size_t i = 0; i < na; ++i) ga[i] += g[i];
    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
  };
  return v;
}

Var Tape::stack_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw data_error("stack_scalars needs at least one input");
  Tensor out(Shape{xs.size()});
  for (size_t i = 0; i < xs.size(); ++i) {
    const Tensor& xv = node(xs[i]).value;
    if (xv.size() != 1) throw data_error("stack_scalars expects scalar nodes");
    out[i] = xv[0];
  }
  Var v = push(std::move(out), nullptr);
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (Var x : xs) ids.push_back(x.id);
  const int vi = v.id;
  nodes_[size_t(vi)].back = [ids, vi](Tape& t) {
    const Tensor& g = t.nodes_[size_t(vi)].grad;
    for (size_t i = 0; i < ids.size(); ++i) {
      t.nodes_[size_t(ids[i])].grad[0] += g[i];
    }
  };
  return v;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw data_error("gradient not computed; call backward() first");
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& l = node(loss);
  if (l.value.size() != 1) {
    throw data_error("backward requires a scalar loss, got shape " + shape_str(l.value.shape()));
  }
  for (auto& n : nodes_) {
    n.grad = Tensor(n.value.shape());
  }
  nodes_[size_t(loss.id)].grad[0] = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (size_t(loss.id) < i) continue;  // nodes after the loss cannot influence it
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  for (auto& n : nodes_) {
    if (n.leaf_param != nullptr) {
      Tensor& pg = n.leaf_param->grad;
      for (size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

}  // namespace svr
