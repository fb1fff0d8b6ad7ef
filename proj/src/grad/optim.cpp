#include "zett/grad/optim.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "zett/common/error.hpp"
#include "zett/simd/kernels.hpp"

namespace zett::grad {

namespace {

template <typename F>
void for_each_unique(const std::vector<Parameter>& params, F&& f) {
  std::unordered_set<const ParamData*> seen;
  for (const auto& p : params)
    if (p && seen.insert(p.get()).second) f(*p);
}

bool has_grad(const ParamData& p) { return p.trainable && p.grad.shape == p.value.shape && !p.grad.data.empty(); }

}  // namespace

void AdamW::step(const std::vector<Parameter>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for_each_unique(params, [&](ParamData& p) {
    if (!has_grad(p)) return;
    if (p.adam_m.shape != p.value.shape) p.adam_m = Tensor(p.value.shape);
    if (p.adam_v.shape != p.value.shape) p.adam_v = Tensor(p.value.shape);
    const double wd = p.decay ? cfg_.weight_decay : 0.0;
    auto& w = p.value.data;
    const auto& g = p.grad.data;
    auto& m = p.adam_m.data;
    auto& v = p.adam_v.data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      w[i] -= lr * (update + wd * w[i]);
    }
  });
}

double global_grad_norm(const std::vector<Parameter>& params) {
  double sq = 0;
  for_each_unique(params, [&](ParamData& p) {
    if (has_grad(p)) sq += simd::kernels().sum_squares(p.grad.data.data(), p.grad.size());
  });
  return std::sqrt(sq);
}

double clip_global_norm(const std::vector<Parameter>& params, double max_norm) {
  require(max_norm > 0, ErrorCode::InvalidArgument, "max_norm must be positive");
  double norm = global_grad_norm(params);
  if (norm > max_norm) {
    double f = max_norm / norm;
    for_each_unique(params, [&](ParamData& p) {
      if (has_grad(p)) simd::kernels().scale(f, p.grad.data.data(), p.grad.size());
    });
  }
  return norm;
}

void zero_grads(const std::vector<Parameter>& params) {
  for_each_unique(params, [](ParamData& p) { p.zero_grad(); });
}

double LrSchedule::operator()(std::uint64_t step) const {
  if (step < warmup_steps) return peak * double(step) / double(warmup_steps);
  if (step >= total_steps || total_steps <= warmup_steps) return step >= total_steps ? final_lr : peak;
  double progress = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return final_lr + (peak - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace zett::grad
