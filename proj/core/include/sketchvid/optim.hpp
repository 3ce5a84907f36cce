#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sketchvid/tensor.hpp"

namespace svr {

// Trainable tensor plus its gradient and RMSprop square-average, all of
// identical shape. Gradients accumulate until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor sq_avg;

  Parameter(std::string n, Tensor init)
      : name(std::move(n)), value(std::move(init)), grad(value.shape()), sq_avg(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

// Named parameter collection with stable addresses.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  size_t count() const { return params_.size(); }
  void zero_grad();
  uint64_t digest() const;  // over parameter values, order-sensitive

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct RmsPropConfig {
  double lr = 0.001;
  double decay = 0.9;
  double eps = 1e-8;
};

// sq_avg <- decay*sq_avg + (1-decay)*grad^2
// value  <- value - lr*grad/(sqrt(sq_avg)+eps)
// Throws a numeric error naming the parameter if an update is non-finite.
void rmsprop_step(const std::vector<Parameter*>& params, const RmsPropConfig& cfg);

}  // namespace svr
