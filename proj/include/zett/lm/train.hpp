#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zett/lm/model.hpp"

namespace zett::lm {

struct LmTrainConfig {
  std::size_t steps = 2000;
  std::size_t tokens_per_batch = 2048;
  double peak_lr = 3e-3;
  double final_lr = 3e-4;
  std::size_t warmup_steps = 100;
  double max_grad_norm = 1.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

std::string lm_train_config_to_json(const LmTrainConfig& cfg);
LmTrainConfig lm_train_config_from_json(std::string_view text);

// Each document encoded and cut into consecutive windows of at most
// max_len tokens; windows shorter than 2 tokens predict nothing and are
// dropped.
std::vector<Sequence> encode_windows(const std::vector<std::string>& docs, const tok::TokenizerSpec& tokenizer,
                                     std::size_t max_len);

// Draws whole windows in a shuffled order (reshuffled every pass) until the
// batch holds at least `tokens` tokens.
class WindowSampler {
 public:
  WindowSampler(std::vector<Sequence> windows, Rng rng);
  std::vector<Sequence> next(std::size_t tokens);
  const std::vector<Sequence>& windows() const { return windows_; }

 private:
  void reshuffle();
  std::vector<Sequence> windows_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct TrainEvent {
  std::size_t step;
  double loss;
  double lr;
};
using TrainCallback = std::function<void(const TrainEvent&)>;

// EmptyCorpus if no window survives encoding. The tokenizer's vocabulary
// size must equal cfg.vocab_size.
LmParams train_lm(const std::vector<std::string>& docs, const tok::TokenizerSpec& tokenizer, const LmConfig& cfg,
                  const LmTrainConfig& tcfg, const TrainCallback& on_step = {});

// Continues training `params` in place with the same loop.
void train_lm_steps(LmParams& params, WindowSampler& sampler, const LmTrainConfig& tcfg,
                    const TrainCallback& on_step = {});

}  // namespace zett::lm
