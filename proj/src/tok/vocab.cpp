#include "zett/tok/vocab.hpp"

#include <algorithm>

#include "zett/common/error.hpp"

namespace zett::tok {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  index_.reserve(tokens.size());
  tokens_.reserve(tokens.size());
  for (auto& t : tokens) add(std::move(t));
}

TokenId Vocabulary::add(std::string token) {
  require(!token.empty(), ErrorCode::InvalidArgument, "empty token");
  auto id = static_cast<TokenId>(tokens_.size());
  auto [it, inserted] = index_.emplace(token, id);
  require(inserted, ErrorCode::InvalidArgument, "duplicate token in vocabulary");
  max_bytes_ = std::max(max_bytes_, token.size());
  tokens_.push_back(std::move(token));
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  require(id < tokens_.size(), ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " >= vocab size " +
                                                            std::to_string(tokens_.size()));
  return tokens_[id];
}

}  // namespace zett::tok
