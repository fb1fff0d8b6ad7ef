#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "zett/grad/tensor.hpp"

namespace zett::grad {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool needs_grad() const;
};

// A packed sequence inside a [rows, d] activation: rows [offset, offset+length).
struct Segment {
  std::size_t offset;
  std::size_t length;
};

// Reverse-mode autodiff recorder. Values are computed eagerly; backward()
// runs the recorded closures in reverse order once, accumulating into the
// grads of trainable Parameters. Inputs that need no gradient (constants,
// frozen parameters and everything computed only from them) are skipped.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(const Parameter& p);  // needs grad iff p->trainable

  // [M,K] x [K,N], or [M,K] x [N,K]^T when transpose_b.
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var add(Var a, Var b);       // same shape
  Var add_bias(Var a, Var b);  // a [R,C] + b [C] broadcast over rows
  Var mul(Var a, Var b);       // elementwise, same shape
  Var scale(Var a, double c);
  Var gather(Var table, std::span<const std::uint32_t> ids);  // rows of table
  Var concat_rows(Var a, Var b);                               // [Ra,C] ++ [Rb,C]
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var softmax(Var x);  // over the last dimension
  Var gelu(Var x);     // exact (erf) form
  // Mean cross-entropy in nats over rows whose label is not -1. Throws
  // IdOutOfRange for labels >= number of columns.
  Var cross_entropy(Var logits, std::span<const std::int32_t> labels);
  Var l2_distance(Var a, Var b);  // per-row Euclidean distance -> [R]
  Var sum(Var x);
  Var mean(Var x);
  // Multi-head scaled dot-product attention over packed segments; q, k, v
  // are [rows, d] with d divisible by heads. Rows outside every segment
  // produce zeros.
  Var attention(Var q, Var k, Var v, std::span<const Segment> segments, std::size_t heads, bool causal);

  // Throws NotScalar unless loss has one element, StaleTape on a second call.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct Var;
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> backward;
    ParamData* param = nullptr;
  };

  Var push(Tensor value, bool needs_grad, std::function<void()> backward = {});
  Node& node(Var v) { return nodes_[v.index]; }
  Tensor& grad_of(Var v);  // allocates lazily
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace zett::grad
