// Test-only reference implementations, kept independent of the library
// paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sketchvid/optim.hpp"
#include "sketchvid/tensor.hpp"

namespace oracles {

// Plain quadruple-loop cross-correlation.
inline svr::Tensor conv2d_naive(const svr::Tensor& in, const svr::Tensor& f,
                                size_t stride, size_t pad) {
  const long ci_n = long(in.dim(0)), h = long(in.dim(1)), w = long(in.dim(2));
  const long co_n = long(f.dim(0)), k = long(f.dim(2));
  const long oh = (h + 2 * long(pad) - k) / long(stride) + 1;
  const long ow = (w + 2 * long(pad) - k) / long(stride) + 1;
  svr::Tensor out(svr::Shape{size_t(co_n), size_t(oh), size_t(ow)});
  for (long co = 0; co < co_n; ++co)
    for (long oy = 0; oy < oh; ++oy)
      for (long ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (long ci = 0; ci < ci_n; ++ci)
          for (long ky = 0; ky < k; ++ky)
            for (long kx = 0; kx < k; ++kx) {
              const long iy = oy * long(stride) + ky - long(pad);
              const long ix = ox * long(stride) + kx - long(pad);
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += in.at3(size_t(ci), size_t(iy), size_t(ix)) *
                     f[size_t(((co * ci_n + ci) * k + ky) * k + kx)];
            }
        out.at3(size_t(co), size_t(oy), size_t(ox)) = acc;
      }
  return out;
}

// Central finite differences of `loss()` with respect to every coordinate
// of every parameter in `params`.
inline std::vector<svr::Tensor> finite_difference_grads(
    const std::vector<svr::Parameter*>& params, const std::function<double()>& loss,
    double eps = 1e-4) {
  std::vector<svr::Tensor> grads;
  for (svr::Parameter* p : params) {
    svr::Tensor g(p->value.shape());
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double hi = loss();
      p->value[i] = orig - eps;
      const double lo = loss();
      p->value[i] = orig;
      g[i] = (hi - lo) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Relative error convention used across the gradient checks: for values with
// magnitude above 1e-6, |a-b|/max(|a|,|b|); below that, absolute difference.
inline double grad_rel_err(double ad, double fd) {
  const double m = std::max(std::fabs(ad), std::fabs(fd));
  if (m < 1e-6) return std::fabs(ad - fd);
  return std::fabs(ad - fd) / m;
}

inline double max_grad_rel_err(const std::vector<svr::Parameter*>& params,
                               const std::vector<svr::Tensor>& fd) {
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (size_t i = 0; i < fd[pi].size(); ++i) {
      worst = std::max(worst, grad_rel_err(params[pi]->grad[i], fd[pi][i]));
    }
  }
  return worst;
}

}  // namespace oracles
