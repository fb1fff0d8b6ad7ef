#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zett/grad/tensor.hpp"
#include "zett/hyper/hypernet.hpp"
#include "zett/lm/model.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::eval {

using grad::Tensor;

// Sums for bits-per-character. Each document is cut into windows of at most
// max_seq_len tokens; the first token of every window has no context, so it is
// left out of both the loss and the character/byte counts.
struct BpcResult {
  double nll_nats = 0;
  std::size_t predicted_tokens = 0;
  std::size_t chars = 0;
  std::size_t bytes = 0;

  double bits() const;
  double bits_per_char() const;  // NumericFailure when chars == 0
  double bits_per_byte() const;
};

BpcResult evaluate_bpc(const lm::LmParams& lm, const Tensor& phi_in, const Tensor& phi_out,
                       const tok::TokenizerSpec& tok, const std::vector<std::string>& docs);

// With the model's own embeddings.
double bits_per_char(const lm::LmParams& lm, const tok::TokenizerSpec& tok, const std::vector<std::string>& docs);
double bits_per_byte(const lm::LmParams& lm, const tok::TokenizerSpec& tok, const std::vector<std::string>& docs);

std::size_t token_count(const tok::TokenizerSpec& tok, const std::vector<std::string>& docs);

// (len_b - len_a) / len_a over total token counts.
double delta_length(const tok::TokenizerSpec& a, const tok::TokenizerSpec& b, const std::vector<std::string>& docs);

// Same vocabulary; score = log(count / total) over substring occurrences
// inside pretokens, unseen tokens get (min seen score - 10). EmptyCorpus when
// no token occurs.
tok::UnigramModel rescore_unigram(const tok::Vocabulary& vocab, const std::vector<std::string>& docs,
                                  const tok::PretokenizerConfig& pretok);

struct FlopsEstimate {
  double params = 0;
  double flops_per_token = 0;
};

// 2 * non-embedding params, plus 2 * d * |V| for the de-embedding.
FlopsEstimate flops_estimate(const lm::LmConfig& cfg);
// Hypernet: 2 * non-embedding params, no de-embedding.
FlopsEstimate flops_estimate(const hyper::HypernetConfig& cfg, std::size_t source_vocab);

// n * s * main + k * t * hypernet
double batch_flops(double n, double s, double main_per_token, double k, double t, double hyper_per_token);

struct EvalReport {
  std::string metric;
  double value = 0;
  std::vector<std::string> tokenizer_ids;
  std::string corpus_id;
  std::string config_hash;

  std::string to_json() const;
};

// 64-bit FNV-1a, as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string tokenizer_id(const tok::TokenizerSpec& t);
std::string corpus_id(const std::vector<std::string>& docs);

}  // namespace zett::eval
