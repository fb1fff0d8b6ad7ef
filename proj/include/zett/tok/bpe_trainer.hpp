#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "zett/tok/tokenizer.hpp"

namespace zett::tok {

// Greedy BPE training on pretoken counts: the alphabet is every unit (byte or
// UTF-8 character) seen, then the most frequent adjacent pair is merged until the
// vocabulary reaches `vocab_size` or no pair occurs twice. Frequency ties go
// to the lexicographically smallest (left, right) pair.
BpeModel train_bpe(const std::vector<PretokenCount>& counts, std::size_t vocab_size, bool byte_units);

}  // namespace zett::tok
