#include "zett/tok/tokenizer.hpp"

#include <algorithm>

#include "zett/common/error.hpp"

namespace zett::tok {

const Vocabulary& TokenizerSpec::vocab() const {
  if (kind() == ModelKind::Unigram) return unigram().vocab;
  return bpe().vocab();
}

TokenizerSpec make_unigram_tokenizer(UnigramModel model, PretokenizerConfig pretok) {
  TokenizerSpec t{std::move(model), std::move(pretok), false};
  t.byte_level = covers_all_bytes(t);
  return t;
}

TokenizerSpec make_bpe_tokenizer(BpeModel model, PretokenizerConfig pretok, bool byte_level) {
  TokenizerSpec t{std::move(model), std::move(pretok), byte_level};
  validate(t);
  return t;
}

bool covers_all_bytes(const TokenizerSpec& t) {
  const Vocabulary& v = t.vocab();
  for (int b = 0; b < 256; ++b) {
    auto id = v.find(std::string(1, static_cast<char>(b)));
    if (!id) return false;
    if (t.kind() == ModelKind::Bpe && !t.bpe().in_alphabet(*id)) return false;
  }
  return true;
}

void validate(const TokenizerSpec& t) {
  if (t.byte_level)
    require(covers_all_bytes(t), ErrorCode::InvalidFormat, "byte_level tokenizer does not cover all 256 bytes");
}

std::vector<TokenId> segment(std::string_view pretoken, const TokenizerSpec& t) {
  if (t.kind() == ModelKind::Unigram) return unigram_segment(pretoken, t.unigram());
  return bpe_encode(pretoken, t.bpe(), t.byte_level);
}

std::vector<TokenId> encode(std::string_view text, const TokenizerSpec& t) {
  std::string storage;
  std::vector<TokenId> out;
  for (auto piece : pretokenize_views(text, t.pretok, storage)) {
    auto ids = segment(piece, t);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string decode(std::span<const TokenId> ids, const TokenizerSpec& t) {
  std::string out;
  const Vocabulary& v = t.vocab();
  for (TokenId id : ids) out += v.token(id);
  return out;
}

std::string decode_text(std::span<const TokenId> ids, const TokenizerSpec& t) {
  std::string out = decode(ids, t);
  if (t.pretok.prefix_space && !out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

std::vector<PretokenCount> count_pretokens(const std::vector<std::string>& docs, const PretokenizerConfig& cfg) {
  std::unordered_map<std::string, std::uint64_t, StringHash, std::equal_to<>> counts;
  std::string storage;
  for (const auto& doc : docs) {
    for (auto piece : pretokenize_views(doc, cfg, storage)) {
      auto it = counts.find(piece);
      if (it == counts.end()) counts.emplace(std::string(piece), 1);
      else ++it->second;
    }
  }
  std::vector<PretokenCount> out;
  out.reserve(counts.size());
  for (auto& [text, count] : counts) out.push_back({text, count});
  std::sort(out.begin(), out.end(), [](const PretokenCount& a, const PretokenCount& b) {
    return a.count != b.count ? a.count > b.count : a.text < b.text;
  });
  return out;
}

const std::vector<TokenId>& CachedEncoder::segment(std::string_view pretoken) {
  auto it = cache_.find(pretoken);
  if (it != cache_.end()) return it->second;
  auto ids = tok::segment(pretoken, *spec_);
  return cache_.emplace(std::string(pretoken), std::move(ids)).first->second;
}

std::vector<TokenId> CachedEncoder::encode(std::string_view text) {
  std::string storage;
  std::vector<TokenId> out;
  for (auto piece : pretokenize_views(text, spec_->pretok, storage)) {
    const auto& ids = segment(piece);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

}  // namespace zett::tok
