#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "zett/common/rng.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::sampler {

using SubstringCounts = std::map<std::string, std::int64_t, std::less<>>;

struct SamplerConfig {
  std::size_t pool_size = 4096;    // n: texts kept in the queue
  std::size_t batch_size = 2048;   // m: texts added per step
  std::size_t max_token_len = 16;  // l: longest substring in bytes
  std::size_t vocab_size = 32768;  // k
  double mu = std::log(1e-5);
  double sigma = 4.0;
  std::uint64_t seed = 0;
  tok::PretokenizerConfig pretok;
  // Viterbi scores: p(t) itself, or log p(t) with p <= 0 floored at
  // (min log score - 10).
  bool log_scores = false;

  void validate() const;  // throws InvalidArgument
};

// Rolling FIFO of texts plus the exact substring counts over it. Substrings
// are byte strings of length 1..l taken inside pretokens; every occurrence
// counts once.
class SamplerState {
 public:
  explicit SamplerState(SamplerConfig cfg);

  // Drops the oldest texts so the new batch fits within pool_size, then adds
  // the batch. Counts change only for the dropped and added texts.
  void advance(const std::vector<std::string>& batch);

  // Scores p(t) = f(t) + N(0, z^2) with f the normalized frequency and
  // z ~ Lognormal(mu, sigma); keeps every observed single byte plus the
  // highest-p remaining substrings up to k (ties: frequency, then bytes).
  // Throws InsufficientSubstrings when fewer than k substrings exist.
  tok::UnigramModel sample_tokenizer();

  const SubstringCounts& counts() const { return counts_; }
  const std::deque<std::string>& queue() const { return queue_; }
  const SamplerConfig& config() const { return cfg_; }
  const Rng& rng() const { return rng_; }

 private:
  void apply(const std::string& text, std::int64_t sign);

  SamplerConfig cfg_;
  std::deque<std::string> queue_;
  SubstringCounts counts_;
  Rng rng_;
};

// From-scratch substring counts over `texts`; the oracle for SamplerState.
SubstringCounts count_substrings(const std::vector<std::string>& texts, std::size_t max_len,
                                                     const tok::PretokenizerConfig& pretok);

struct StreamItem {
  std::vector<std::string> batch;
  tok::TokenizerSpec tokenizer;  // unigram sampled from the queue holding `batch`
};

// Draws batches of m documents (reshuffled every pass over the corpus),
// advances the queue and samples the paired tokenizer.
class TrainingStream {
 public:
  TrainingStream(const std::vector<std::string>& docs, SamplerConfig cfg);  // throws EmptyCorpus
  StreamItem next();
  const SamplerState& state() const { return state_; }

 private:
  const std::vector<std::string>* docs_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng shuffle_rng_;
  SamplerState state_;
};

double jaccard(const tok::Vocabulary& a, const tok::Vocabulary& b);

}  // namespace zett::sampler
