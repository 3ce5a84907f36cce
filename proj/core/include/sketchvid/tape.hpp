#pragma once

#include <functional>
#include <vector>

#include "sketchvid/optim.hpp"
#include "sketchvid/tensor.hpp"

namespace svr {

// Forward kernels shared by the tape and the tape-free inference path.
namespace kernels {
Tensor conv2d(const Tensor& input, const Tensor& filters, size_t stride, size_t padding);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
}  // namespace kernels

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records forward operations in execution order; backward() replays the
// local rules in exact reverse order and flushes leaf gradients into the
// referenced Parameters (accumulating until the caller zeroes them).
class Tape {
 public:
  Var input(Tensor value);
  Var param(Parameter& p);

  Var conv2d(Var input, Var filters, size_t stride, size_t padding);
  Var relu(Var x);
  Var linear(Var x, Var w, Var b);
  Var global_avg_pool(Var x);
  Var softmax_cross_entropy(Var scores, const Tensor& one_hot_target);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var add_n(const std::vector<Var>& xs);
  Var sum(Var x);                               // scalar
  Var sum_squares(Var x);                       // scalar
  Var concat(Var a, Var b);                     // 1-D
  Var stack_scalars(const std::vector<Var>& xs);  // 1-D from scalars

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;  // valid after backward()

  // loss must be a scalar node; throws otherwise.
  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* leaf_param = nullptr;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Tensor value, std::function<void(Tape&)> back);

  std::vector<Node> nodes_;
};

}  // namespace svr
