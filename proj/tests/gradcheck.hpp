#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "zett/common/rng.hpp"
#include "zett/grad/tape.hpp"

namespace zett::test {

using grad::Parameter;
using grad::Tape;
using grad::Tensor;
using grad::Var;

using LossFn = std::function<Var(Tape&)>;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

// Central differences on up to `max_coords` coordinates per parameter
// (all of them when the parameter is smaller). Returns the worst relative
// error against the tape's gradient.
inline double check_gradients(const std::vector<Parameter>& params, const LossFn& loss_fn, Rng& rng,
                              std::size_t max_coords = 1u << 30, double h = 1e-5) {
  for (const auto& p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }
  auto eval = [&] {
    Tape tape;
    return loss_fn(tape).value().item();
  };
  double worst = 0;
  for (const auto& p : params) {
    if (!p->trainable) continue;
    std::vector<std::size_t> coords(p->value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      double up = eval();
      p->value.data[i] = saved - h;
      double down = eval();
      p->value.data[i] = saved;
      worst = std::max(worst, relative_error(p->grad.data[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

struct OpCase {
  std::vector<Parameter> params;
  LossFn loss;
};

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {
      "matmul",  "matmul_tb", "add",           "add_bias",    "mul",  "scale",
      "gather",  "concat",    "layer_norm",    "softmax",     "gelu", "cross_entropy",
      "l2",      "sum",       "mean",          "attention",   "attention_causal"};
  return ops;
}

// A random instance of `op`; the scalar loss is sum(op(...) * R) for a fixed
// random R so every output coordinate contributes.
inline OpCase make_op_case(const std::string& op, Rng& rng) {
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  auto param = [&](grad::Shape s, double stddev = 1.0) {
    return grad::make_param("p", Tensor::randn(std::move(s), rng, stddev));
  };
  const std::uint64_t weight_seed = rng();
  auto weighted = [weight_seed](Tape& t, Var y) {
    Rng r(weight_seed);
    Var w = t.constant(Tensor::randn(y.value().shape, r, 1.0));
    return t.sum(t.mul(y, w));
  };
  OpCase c;
  std::size_t R = dim(1, 5), C = dim(1, 6), N = dim(1, 5);
  if (op == "matmul" || op == "matmul_tb") {
    bool tb = op == "matmul_tb";
    c.params = {param({R, C}), param(tb ? grad::Shape{N, C} : grad::Shape{C, N})};
    c.loss = [p = c.params, tb, weighted](Tape& t) { return weighted(t, t.matmul(t.param(p[0]), t.param(p[1]), tb)); };
  } else if (op == "add" || op == "mul" || op == "l2") {
    c.params = {param({R, C}), param({R, C})};
    c.loss = [p = c.params, op, weighted](Tape& t) {
      Var a = t.param(p[0]), b = t.param(p[1]);
      return weighted(t, op == "add" ? t.add(a, b) : op == "mul" ? t.mul(a, b) : t.l2_distance(a, b));
    };
  } else if (op == "add_bias") {
    c.params = {param({R, C}), param({C})};
    c.loss = [p = c.params, weighted](Tape& t) { return weighted(t, t.add_bias(t.param(p[0]), t.param(p[1]))); };
  } else if (op == "scale") {
    double k = rng.normal() * 2;
    c.params = {param({R, C})};
    c.loss = [p = c.params, k, weighted](Tape& t) { return weighted(t, t.scale(t.param(p[0]), k)); };
  } else if (op == "gather") {
    std::vector<std::uint32_t> ids(dim(1, 8));
    for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(R));
    c.params = {param({R, C})};
    c.loss = [p = c.params, ids, weighted](Tape& t) { return weighted(t, t.gather(t.param(p[0]), ids)); };
  } else if (op == "concat") {
    c.params = {param({R, C}), param({N, C})};
    c.loss = [p = c.params, weighted](Tape& t) { return weighted(t, t.concat_rows(t.param(p[0]), t.param(p[1]))); };
  } else if (op == "layer_norm") {
    C = dim(2, 8);
    c.params = {param({R, C}), param({C}), param({C})};
    c.loss = [p = c.params, weighted](Tape& t) {
      return weighted(t, t.layer_norm(t.param(p[0]), t.param(p[1]), t.param(p[2])));
    };
  } else if (op == "softmax" || op == "gelu") {
    c.params = {param({R, C}, 2.0)};
    c.loss = [p = c.params, op, weighted](Tape& t) {
      Var x = t.param(p[0]);
      return weighted(t, op == "softmax" ? t.softmax(x) : t.gelu(x));
    };
  } else if (op == "cross_entropy") {
    std::vector<std::int32_t> labels(R);
    for (auto& l : labels) l = rng.below(5) == 0 ? -1 : static_cast<std::int32_t>(rng.below(C));
    labels[0] = static_cast<std::int32_t>(rng.below(C));
    c.params = {param({R, C}, 2.0)};
    c.loss = [p = c.params, labels](Tape& t) { return t.scale(t.cross_entropy(t.param(p[0]), labels), 1.7); };
  } else if (op == "sum" || op == "mean") {
    c.params = {param({R, C})};
    c.loss = [p = c.params, op](Tape& t) {
      Var x = t.param(p[0]);
      Var s = op == "sum" ? t.sum(x) : t.mean(x);
      return t.mul(s, s);
    };
  } else if (op == "attention" || op == "attention_causal") {
    bool causal = op == "attention_causal";
    std::size_t heads = dim(1, 3), dh = dim(1, 3);
    std::vector<grad::Segment> segs;
    std::size_t rows = 0;
    for (std::size_t s = 0, n = dim(1, 3); s < n; ++s) {
      std::size_t len = dim(1, 4);
      segs.push_back({rows, len});
      rows += len;
    }
    c.params = {param({rows, heads * dh}), param({rows, heads * dh}), param({rows, heads * dh})};
    c.loss = [p = c.params, segs, heads, causal, weighted](Tape& t) {
      return weighted(t, t.attention(t.param(p[0]), t.param(p[1]), t.param(p[2]), segs, heads, causal));
    };
  } else {
    throw std::invalid_argument("unknown op " + op);
  }
  return c;
}

}  // namespace zett::test
