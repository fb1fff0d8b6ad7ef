#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zett/tok/vocab.hpp"

namespace zett::tok {

using Merge = std::pair<std::string, std::string>;

// Byte-pair-encoding tokenization function: start from alphabet units and
// repeatedly apply the lowest-ranked applicable merge.
class BpeModel {
 public:
  struct MergeRule {
    std::uint32_t rank;
    TokenId result;
  };

  BpeModel() = default;
  // The alphabet is every vocab entry that no merge produces. Throws
  // InvalidFormat when a merge operand is neither in the alphabet nor
  // produced by an earlier merge, or a merge result is missing from vocab.
  BpeModel(Vocabulary vocab, std::vector<Merge> merges);

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<Merge>& merges() const { return merges_; }
  bool in_alphabet(TokenId id) const { return alphabet_[id]; }
  const MergeRule* find_merge(TokenId left, TokenId right) const;

  bool operator==(const BpeModel& o) const { return vocab_ == o.vocab_ && merges_ == o.merges_; }

 private:
  static std::uint64_t key(TokenId l, TokenId r) { return (std::uint64_t(l) << 32) | r; }

  Vocabulary vocab_;
  std::vector<Merge> merges_;
  std::vector<bool> alphabet_;
  std::unordered_map<std::uint64_t, MergeRule> rules_;
};

// Splits into units (bytes when `byte_units`, else UTF-8 characters with
// malformed bytes kept singly) and applies merges. When several positions
// hold the lowest-ranked pair, the leftmost merges first. Throws
// Unsegmentable when a unit is not an alphabet symbol.
std::vector<TokenId> bpe_encode(std::string_view pretoken, const BpeModel& model, bool byte_units);

}  // namespace zett::tok
