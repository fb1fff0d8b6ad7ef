#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "zett/lm/model.hpp"
#include "zett/sampler/sampler.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::hyper {

using grad::Parameter;
using grad::Tape;
using grad::Tensor;
using grad::Var;

struct HypernetConfig {
  std::size_t layers = 3;
  std::size_t d_model = 64;
  std::size_t ffn_dim = 128;
  std::size_t heads = 1;
  std::size_t max_decomp_len = 7;
  double alpha = 0.5;
  bool lang_embedding = false;
  std::size_t n_langs = 0;

  // d_model from the LM, ffn 2d, heads min(d/64, 32) floored at 1.
  static HypernetConfig for_lm(const lm::LmConfig& lm);
  void validate() const;
  bool operator==(const HypernetConfig&) const = default;
};

std::string hypernet_config_to_json(const HypernetConfig& cfg);
HypernetConfig hypernet_config_from_json(std::string_view text, const lm::LmConfig& lm);

struct HyperBlock {
  Parameter wq, wk, wv, wo, bo, ln1_g, ln1_b;
  Parameter w1, b1, w2, b2, ln2_g, ln2_b;
};

struct HypernetParams {
  HypernetConfig cfg;
  bool tied = true;            // single head when the LM ties its embeddings
  std::size_t base_vocab = 0;  // |V_a| before byte-level conversion
  Parameter extra;             // [n_extra, d] rows for tokens added by to_byte_level; null if none
  Parameter pos;               // [max_decomp_len (+1 with a language slot), d]
  Parameter lang;              // [n_langs, d] or null
  std::vector<HyperBlock> blocks;
  Parameter in_w, in_b, out_w, out_b;  // out_* null when tied

  std::size_t n_extra() const { return extra ? extra->value.rows() : 0; }
  std::vector<Parameter> all() const;
  HypernetParams clone() const;
};

HypernetParams init_hypernet(const HypernetConfig& cfg, const lm::LmParams& lm, std::size_t n_extra,
                             std::uint64_t seed);

// T_a(t) truncated to the first max_len ids, memoized per token.
class Decomposer {
 public:
  Decomposer(tok::TokenizerSpec tok_a_bl, std::size_t max_len);
  const std::vector<std::uint32_t>& operator()(std::string_view token);
  const tok::TokenizerSpec& tokenizer() const { return tok_; }

 private:
  tok::TokenizerSpec tok_;
  std::size_t max_len_;
  std::unordered_map<std::string, std::vector<std::uint32_t>, tok::StringHash, std::equal_to<>> memo_;
};

std::vector<std::uint32_t> decompose(std::string_view token, const tok::TokenizerSpec& tok_a_bl, std::size_t max_len);

struct Prediction {
  Var in;
  Var out;  // same node as `in` when tied
};

// Rows of `source` are phi_a's input rows followed by the extra rows.
Var source_table(Tape& t, const HypernetParams& hp, const Tensor& phi_a_in);

Prediction predict_var(Tape& t, const HypernetParams& hp, Var source,
                       const std::vector<const std::vector<std::uint32_t>*>& decomps, std::optional<std::size_t> lang = {});

struct PredictedEmbeddings {
  Tensor in;
  Tensor out;  // equals `in` when tied
};

// No gradients; tokens processed in chunks.
PredictedEmbeddings hypernet_forward(const std::vector<std::string>& tokens, const HypernetParams& hp,
                                     const lm::LmParams& lm, Decomposer& dec, std::optional<std::size_t> lang = {});

// Mean over `rows` of ||pred[rows[i]] - target[i]||, summed over the input
// and (when untied) output roles. Zero when rows is empty.
Var aux_loss_var(Tape& t, const Prediction& pred, const std::vector<std::uint32_t>& rows, const Tensor& target_in,
                 const Tensor& target_out, bool tied);

// Warmup objective over the given V_a ids (all of V_a by default).
Var warmup_loss_var(Tape& t, const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec,
                    const std::vector<std::uint32_t>& ids);
double warmup_loss(const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec);

// One training example for the main objective: sequences in a target
// tokenizer's ids plus the subset of its vocabulary the logits run over.
struct MainBatch {
  std::vector<std::string> subset_tokens;  // strings of the subset, logit order
  std::vector<lm::Sequence> seqs;          // ids already remapped to subset positions
  std::vector<std::uint32_t> aux_rows;     // subset positions whose token is in V_a
  Tensor aux_target_in, aux_target_out;    // matching rows of the aux target
};

struct LossParts {
  Var total;
  double main = 0;
  double aux = 0;
};

LossParts final_loss_var(Tape& t, const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec,
                         const MainBatch& batch, double alpha);

// Subset = every token in `seqs` plus a uniform sample of the remaining
// vocabulary up to subset_size; aux targets are phi_a rows of shared tokens.
MainBatch make_main_batch(const std::vector<lm::Sequence>& seqs, const tok::Vocabulary& vb, const lm::LmParams& lm,
                          const tok::Vocabulary& va, std::size_t subset_size, Rng& rng);

struct HypernetTrainConfig {
  std::size_t warmup_steps = 10000;
  std::size_t steps = 190000;  // main steps after the warmup stage
  double warmup_lr = 3e-4;
  double peak_lr = 6e-5;
  double final_lr = 6e-6;
  std::size_t lr_warmup_steps = 10000;
  double max_grad_norm = 0.1;
  double weight_decay = 0.01;
  std::size_t warmup_batch = 1024;  // V_a tokens per warmup step
  std::size_t subset_size = 32768;  // k
  std::uint64_t seed = 0;

  // Scaled down for the toy model.
  static HypernetTrainConfig desk();
};

std::string hypernet_train_config_to_json(const HypernetTrainConfig& cfg);
HypernetTrainConfig hypernet_train_config_from_json(std::string_view text);

struct HyperEvent {
  enum Stage { Warmup, Main } stage;
  std::size_t step;
  double loss;  // warmup loss, or main LM loss
  double aux;
};
using HyperCallback = std::function<void(const HyperEvent&)>;

// tok_a is the LM's tokenizer; it is converted to byte level for
// decomposition. The LM is not modified.
HypernetParams train_hypernetwork(const std::vector<std::string>& docs, const lm::LmParams& lm,
                                  const tok::TokenizerSpec& tok_a, const HypernetConfig& hcfg,
                                  const sampler::SamplerConfig& scfg, const HypernetTrainConfig& tcfg,
                                  const HyperCallback& on_step = {});

struct ZettResult {
  PredictedEmbeddings embeddings;
  tok::TokenizerSpec tokenizer;  // new_tok, byte-level converted when it was not
};

ZettResult zett_transfer(const lm::LmParams& lm, const HypernetParams& hp, const tok::TokenizerSpec& tok_a,
                         const tok::TokenizerSpec& new_tok);

struct ContinuedConfig {
  std::size_t steps = 1000;
  double lr = 1e-5;  // constant; one of kContinuedLrSweep by default
  std::size_t tokens_per_batch = 2048;
  std::size_t subset_size = 1024;
  double alpha = 0.5;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
};
inline const std::vector<double> kContinuedLrSweep = {1e-6, 3e-6, 6e-6, 1e-5, 3e-5};

struct ContinuedResult {
  lm::LmParams lm;
  HypernetParams hypernet;
  tok::TokenizerSpec tokenizer;
};

// Joint updates of theta and psi on target_tok with subset logits; the aux
// target is the zero-shot prediction for the target vocabulary.
ContinuedResult continued_training(const lm::LmParams& lm, const HypernetParams& hp, const tok::TokenizerSpec& tok_a,
                                   const tok::TokenizerSpec& target_tok, const std::vector<std::string>& docs,
                                   const ContinuedConfig& cfg, const HyperCallback& on_step = {});

void save_hypernet(const HypernetParams& hp, const std::string& path);
HypernetParams load_hypernet(const std::string& path);

}  // namespace zett::hyper
