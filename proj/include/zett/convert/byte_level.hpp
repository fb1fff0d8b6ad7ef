#pragma once

#include <cstddef>

#include "zett/tok/tokenizer.hpp"

namespace zett::convert {

struct ByteLevelConversion {
  tok::TokenizerSpec tokenizer;
  std::size_t extra_tokens = 0;  // appended to the end of the vocabulary
};

// Makes every byte string segmentable. Unigram: missing single bytes are
// appended with score (min score - 10). BPE: missing bytes and the partial
// characters needed to rebuild each multi-byte alphabet character are
// appended, and the assembling merges are placed before all existing merges.
// Existing token ids are unchanged. Already byte-level input is returned as is.
ByteLevelConversion to_byte_level(const tok::TokenizerSpec& t);

}  // namespace zett::convert
