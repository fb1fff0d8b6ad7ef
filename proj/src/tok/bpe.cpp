#include "zett/tok/bpe.hpp"

#include <limits>
#include <unordered_set>

#include "zett/common/error.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::tok {

BpeModel::BpeModel(Vocabulary vocab, std::vector<Merge> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)), alphabet_(vocab_.size(), true) {
  std::vector<TokenId> results;
  results.reserve(merges_.size());
  for (const auto& [l, r] : merges_) {
    auto res = vocab_.find(l + r);
    require(res.has_value(), ErrorCode::InvalidFormat, "merge result missing from vocab: '" + l + r + "'");
    alphabet_[*res] = false;
    results.push_back(*res);
  }
  std::vector<bool> producible = alphabet_;
  rules_.reserve(merges_.size());
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [l, r] = merges_[rank];
    auto li = vocab_.find(l);
    auto ri = vocab_.find(r);
    require(li && ri, ErrorCode::InvalidFormat, "merge operand missing from vocab: '" + l + "' '" + r + "'");
    require(producible[*li] && producible[*ri], ErrorCode::InvalidFormat,
            "merge operand used before it is produced: '" + l + "' '" + r + "'");
    rules_.emplace(key(*li, *ri), MergeRule{static_cast<std::uint32_t>(rank), results[rank]});
    producible[results[rank]] = true;
  }
}

const BpeModel::MergeRule* BpeModel::find_merge(TokenId left, TokenId right) const {
  auto it = rules_.find(key(left, right));
  return it == rules_.end() ? nullptr : &it->second;
}

std::vector<TokenId> bpe_encode(std::string_view pretoken, const BpeModel& model, bool byte_units) {
  std::vector<TokenId> symbols;
  symbols.reserve(pretoken.size());
  for (std::size_t pos = 0; pos < pretoken.size();) {
    std::size_t len = byte_units ? 1 : next_utf8(pretoken, pos).length;
    auto id = model.vocab().find(pretoken.substr(pos, len));
    if (!id || !model.in_alphabet(*id))
      fail(ErrorCode::Unsegmentable, "unit at byte " + std::to_string(pos) + " is not in the BPE alphabet");
    symbols.push_back(*id);
    pos += len;
  }
  while (symbols.size() > 1) {
    std::uint32_t best_rank = std::numeric_limits<std::uint32_t>::max();
    std::size_t best_pos = 0;
    TokenId best_result = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto* rule = model.find_merge(symbols[i], symbols[i + 1]);
      if (rule && rule->rank < best_rank) {
        best_rank = rule->rank;
        best_pos = i;
        best_result = rule->result;
      }
    }
    if (best_rank == std::numeric_limits<std::uint32_t>::max()) break;
    symbols[best_pos] = best_result;
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  return symbols;
}

}  // namespace zett::tok
