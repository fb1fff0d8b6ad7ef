#pragma once

#include <string_view>
#include <vector>

#include "zett/tok/vocab.hpp"

namespace zett::tok {

// UnigramLM tokenization function: a pretoken is segmented into the
// decomposition with the largest sum of token scores. Scores are arbitrary
// finite reals; only their sums are compared.
struct UnigramModel {
  Vocabulary vocab;
  std::vector<double> scores;

  UnigramModel() = default;
  UnigramModel(Vocabulary v, std::vector<double> s);  // validates size and finiteness

  double score(TokenId id) const { return scores[id]; }
  bool operator==(const UnigramModel&) const = default;
};

// Viterbi argmax. Ties on score go to fewer tokens, then to the
// lexicographically smallest list of cut positions. Throws Unsegmentable.
std::vector<TokenId> unigram_segment(std::string_view pretoken, const UnigramModel& model);

// Exhaustive enumeration with the same tie-break; test oracle for the
// Viterbi path. Throws InputTooLong when pretoken.size() > max_len.
std::vector<TokenId> unigram_segment_brute(std::string_view pretoken, const UnigramModel& model,
                                           std::size_t max_len = 12);

}  // namespace zett::tok
