#include "sketchvid/optim.hpp"

#include <cmath>

#include "sketchvid/errors.hpp"

namespace svr {

Parameter& ParamSet::add(std::string name, Tensor init) {
  for (const auto& p : params_) {
    if (p->name == name) throw data_error("duplicate parameter name: " + name);
  }
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return *params_.back();
}

Parameter& ParamSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw data_error("unknown parameter: " + name);
}

const Parameter& ParamSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw data_error("unknown parameter: " + name);
}

std::vector<Parameter*> ParamSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

uint64_t ParamSet::digest() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = h * 0x100000001b3ULL ^ fnv1a64(p->name);
    h = h * 0x100000001b3ULL ^ p->value.digest();
  }
  return h;
}

void rmsprop_step(const std::vector<Parameter*>& params, const RmsPropConfig& cfg) {
  for (Parameter* p : params) {
    double* v = p->value.data();
    const double* g = p->grad.data();
    double* s = p->sq_avg.data();
    const size_t n = p->value.size();
    for (size_t i = 0; i < n; ++i) {
      s[i] = cfg.decay * s[i] + (1.0 - cfg.decay) * g[i] * g[i];
      const double upd = cfg.lr * g[i] / (std::sqrt(s[i]) + cfg.eps);
      const double next = v[i] - upd;
      if (!std::isfinite(next)) {
        throw numeric_error("non-finite update for parameter " + p->name);
      }
      v[i] = next;
    }
  }
}

}  // namespace svr
