#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zett/tok/tokenizer.hpp"

namespace zett::convert {

enum class Equivalence {
  Sequence,  // identical token-string sequences
  Multiset,  // identical token strings, order ignored
};

// Token strings for one pretoken, or nullopt when it is unsegmentable.
std::optional<std::vector<std::string>> segment_strings(std::string_view pretoken, const tok::TokenizerSpec& t);

bool equivalent(const std::optional<std::vector<std::string>>& a, const std::optional<std::vector<std::string>>& b,
                Equivalence eq);

// Draws `n` pretokens of `docs` (pretokenized with a's rule) with probability
// proportional to frequency and returns the fraction segmented equivalently by
// `a` and `b`. Unsegmentable under both counts as equivalent, under only one
// as not. Throws EmptyCorpus.
double preservation_rate(const tok::TokenizerSpec& a, const tok::TokenizerSpec& b, const std::vector<std::string>& docs,
                         std::size_t n, std::uint64_t seed = 0, Equivalence eq = Equivalence::Sequence);

// Frequency-weighted rate over the given pretoken counts (no sampling).
double preservation_rate(const tok::TokenizerSpec& a, const tok::TokenizerSpec& b,
                         const std::vector<tok::PretokenCount>& pretokens, Equivalence eq = Equivalence::Sequence);

}  // namespace zett::convert
