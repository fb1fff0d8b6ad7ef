#include "zett/lm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/common/json_fields.hpp"
#include "zett/grad/optim.hpp"

namespace zett::lm {

using nlohmann::json;

std::string lm_train_config_to_json(const LmTrainConfig& c) {
  return json{{"steps", c.steps},         {"tokens_per_batch", c.tokens_per_batch},
              {"peak_lr", c.peak_lr},     {"final_lr", c.final_lr},
              {"warmup_steps", c.warmup_steps}, {"max_grad_norm", c.max_grad_norm},
              {"weight_decay", c.weight_decay}, {"seed", c.seed}}
      .dump();
}

LmTrainConfig lm_train_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string("LM training config: ") + e.what());
  }
  LmTrainConfig c;
  JsonFields f(j, "train");
  f.get("steps", c.steps).get("tokens_per_batch", c.tokens_per_batch).get("peak_lr", c.peak_lr);
  f.get("final_lr", c.final_lr).get("warmup_steps", c.warmup_steps).get("max_grad_norm", c.max_grad_norm);
  f.get("weight_decay", c.weight_decay).get("seed", c.seed);
  f.finish();
  return c;
}

std::vector<Sequence> encode_windows(const std::vector<std::string>& docs, const tok::TokenizerSpec& tokenizer,
                                     std::size_t max_len) {
  require(max_len >= 2, ErrorCode::InvalidArgument, "window length must be >= 2");
  tok::CachedEncoder enc(tokenizer);
  std::vector<Sequence> out;
  for (const auto& doc : docs) {
    auto ids = enc.encode(doc);
    for (std::size_t i = 0; i < ids.size(); i += max_len) {
      std::size_t end = std::min(ids.size(), i + max_len);
      if (end - i >= 2) out.emplace_back(ids.begin() + std::ptrdiff_t(i), ids.begin() + std::ptrdiff_t(end));
    }
  }
  return out;
}

WindowSampler::WindowSampler(std::vector<Sequence> windows, Rng rng) : windows_(std::move(windows)), rng_(rng) {
  require(!windows_.empty(), ErrorCode::EmptyCorpus, "no training windows");
  order_.resize(windows_.size());
  reshuffle();
}

void WindowSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
}

std::vector<Sequence> WindowSampler::next(std::size_t tokens) {
  std::vector<Sequence> batch;
  std::size_t have = 0;
  while (have < tokens || batch.empty()) {
    if (cursor_ == order_.size()) reshuffle();
    const auto& w = windows_[order_[cursor_++]];
    have += w.size();
    batch.push_back(w);
  }
  return batch;
}

void train_lm_steps(LmParams& params, WindowSampler& sampler, const LmTrainConfig& tcfg, const TrainCallback& on_step) {
  auto trainable = params.all();
  grad::AdamW opt({0.9, 0.95, 1e-8, tcfg.weight_decay});
  grad::LrSchedule sched{tcfg.warmup_steps, tcfg.steps, tcfg.peak_lr, tcfg.final_lr};
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    auto seqs = sampler.next(tcfg.tokens_per_batch);
    PackedBatch batch = pack(seqs, params.cfg.max_seq_len);
    grad::zero_grads(trainable);
    Tape t;
    Var loss = lm_loss_var(t, params, t.param(params.phi_in), t.param(params.phi_out), batch);
    t.backward(loss);
    double l = loss.value().item();
    require(std::isfinite(l), ErrorCode::NumericFailure, "LM loss diverged at step " + std::to_string(step));
    grad::clip_global_norm(trainable, tcfg.max_grad_norm);
    double lr = sched(step + 1);
    opt.step(trainable, lr);
    if (on_step) on_step({step, l, lr});
  }
}

LmParams train_lm(const std::vector<std::string>& docs, const tok::TokenizerSpec& tokenizer, const LmConfig& cfg,
                  const LmTrainConfig& tcfg, const TrainCallback& on_step) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "empty training corpus");
  require(tokenizer.vocab().size() == cfg.vocab_size, ErrorCode::DimensionMismatch,
          "tokenizer has " + std::to_string(tokenizer.vocab().size()) + " tokens, LM expects " +
              std::to_string(cfg.vocab_size));
  LmParams params = init_lm(cfg, tcfg.seed);
  if (tcfg.steps == 0) return params;
  WindowSampler sampler(encode_windows(docs, tokenizer, cfg.max_seq_len), Rng(tcfg.seed).split("lm-batches"));
  train_lm_steps(params, sampler, tcfg, on_step);
  return params;
}

}  // namespace zett::lm
