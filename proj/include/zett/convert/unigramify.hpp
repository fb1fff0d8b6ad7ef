#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zett/convert/lp.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::convert {

using Decomposition = std::vector<tok::TokenId>;

struct DecompositionSet {
  std::string pretoken;
  std::vector<Decomposition> decomps;  // includes `reference`
  Decomposition reference;
};

// Number of ways to write `pretoken` as a concatenation of vocab tokens,
// saturating at UINT64_MAX.
std::uint64_t count_decompositions(std::string_view pretoken, const tok::Vocabulary& vocab);

// The k highest-scoring decompositions (score desc, then fewer tokens, then
// earlier last cut). Fewer when fewer exist.
std::vector<Decomposition> k_best_decompositions(std::string_view pretoken, const tok::Vocabulary& vocab,
                                                 std::span<const double> scores, std::size_t k);

// All decompositions when there are at most `cap`; otherwise the reference
// plus the cap-1 best other decompositions under `scores`. Throws
// Unsegmentable when the pretoken has no decomposition.
DecompositionSet enumerate_decompositions(std::string_view pretoken, const tok::Vocabulary& vocab,
                                          const Decomposition& reference, std::size_t cap,
                                          std::span<const double> scores);

// Hinge coefficients count(competitor) - count(reference); nullopt when the
// two use the same multiset of tokens (nothing to separate).
std::optional<LpConstraint> competitor_constraint(const Decomposition& reference, const Decomposition& competitor);

struct UnigramifyOptions {
  std::size_t top_n = 1'000'000;
  std::size_t enumeration_cap = 64;  // full enumeration up to this many decompositions
  std::size_t k_best = 32;
  std::size_t max_rounds = 10;
  double delta = 1e-6;
  double bpe_prior_score = -1.0;  // prior for every token of a BPE source
  LpOptions lp;
};

struct UnigramifyResult {
  tok::TokenizerSpec tokenizer;  // unigram, same vocabulary and pretokenizer as the source
  double residual_loss = 0.0;
  double preserved = 0.0;           // frequency-weighted sequence equivalence over X
  double preserved_multiset = 0.0;  // same, ignoring token order
  std::size_t skipped = 0;          // pretokens of X the source cannot segment
  std::size_t pretokens = 0;        // |X|
  std::size_t constraints = 0;
  std::size_t rounds = 0;
  LpBackend backend = LpBackend::Auto;
};

// Approximates `source` by a UnigramLM over its vocabulary: minimizes the
// summed hinge max(0, score(C) - score(T(x)) + delta) over the top_n most
// frequent pretokens x of `docs` and their competing decompositions C.
UnigramifyResult unigramify(const tok::TokenizerSpec& source, const std::vector<std::string>& docs,
                            const UnigramifyOptions& opts = {});

// Same, with the pretoken counts already computed (most frequent first).
UnigramifyResult unigramify(const tok::TokenizerSpec& source, const std::vector<tok::PretokenCount>& pretokens,
                            const UnigramifyOptions& opts = {});

// {"residual_loss": ..., "preserved": ..., "skipped": ...}
std::string report_json(const UnigramifyResult& r);

}  // namespace zett::convert
