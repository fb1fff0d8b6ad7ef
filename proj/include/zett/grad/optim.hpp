#pragma once

#include <cstdint>
#include <vector>

#include "zett/grad/tensor.hpp"

namespace zett::grad {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay; moment buffers live in each ParamData so tied
// parameters listed once share one state.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every trainable parameter with a gradient, then
  // leaves the gradients untouched.
  void step(const std::vector<Parameter>& params, double lr);

  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
};

double global_grad_norm(const std::vector<Parameter>& params);

// Rescales all gradients by max_norm / norm iff norm > max_norm. Returns the
// norm before clipping.
double clip_global_norm(const std::vector<Parameter>& params, double max_norm);

void zero_grads(const std::vector<Parameter>& params);

// Linear warmup from 0 to peak over warmup_steps, then cosine decay to
// final_lr at total_steps (held there afterwards).
struct LrSchedule {
  std::uint64_t warmup_steps = 10000;
  std::uint64_t total_steps = 200000;
  double peak = 6e-5;
  double final_lr = 6e-6;

  double operator()(std::uint64_t step) const;
};

}  // namespace zett::grad
