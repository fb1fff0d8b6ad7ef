#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "zett/tok/bpe.hpp"
#include "zett/tok/pretokenizer.hpp"
#include "zett/tok/unigram.hpp"

namespace zett::tok {

enum class ModelKind { Unigram, Bpe };

// A tokenizer is its vocabulary plus the function mapping text onto it:
// pretokenization followed by per-pretoken segmentation.
struct TokenizerSpec {
  std::variant<UnigramModel, BpeModel> model;
  PretokenizerConfig pretok;
  bool byte_level = false;

  ModelKind kind() const { return model.index() == 0 ? ModelKind::Unigram : ModelKind::Bpe; }
  const Vocabulary& vocab() const;
  const UnigramModel& unigram() const { return std::get<UnigramModel>(model); }
  const BpeModel& bpe() const { return std::get<BpeModel>(model); }

  bool operator==(const TokenizerSpec&) const = default;
};

TokenizerSpec make_unigram_tokenizer(UnigramModel model, PretokenizerConfig pretok = {});
TokenizerSpec make_bpe_tokenizer(BpeModel model, PretokenizerConfig pretok = {}, bool byte_level = false);

// True when every one of the 256 single bytes is a unit the model can start
// from (a unigram token, or a BPE alphabet symbol).
bool covers_all_bytes(const TokenizerSpec& t);

// Throws InvalidFormat if `byte_level` is set but not every byte is covered.
void validate(const TokenizerSpec& t);

// Segments one pretoken (no pretokenization, no prefix space).
std::vector<TokenId> segment(std::string_view pretoken, const TokenizerSpec& t);

std::vector<TokenId> encode(std::string_view text, const TokenizerSpec& t);

// Concatenated token bytes (includes a prefix space if one was added).
std::string decode(std::span<const TokenId> ids, const TokenizerSpec& t);

// decode() with the prefix space removed, i.e. the inverse of encode().
std::string decode_text(std::span<const TokenId> ids, const TokenizerSpec& t);

struct PretokenCount {
  std::string text;
  std::uint64_t count;
};

// Distinct pretokens of `docs`, most frequent first (ties by bytes).
std::vector<PretokenCount> count_pretokens(const std::vector<std::string>& docs, const PretokenizerConfig& cfg);

// Memoizes segment() per distinct pretoken; for repeated corpus passes.
class CachedEncoder {
 public:
  explicit CachedEncoder(const TokenizerSpec& t) : spec_(&t) {}
  const std::vector<TokenId>& segment(std::string_view pretoken);
  std::vector<TokenId> encode(std::string_view text);
  const TokenizerSpec& spec() const { return *spec_; }

 private:
  const TokenizerSpec* spec_;
  std::unordered_map<std::string, std::vector<TokenId>, StringHash, std::equal_to<>> cache_;
};

}  // namespace zett::tok
