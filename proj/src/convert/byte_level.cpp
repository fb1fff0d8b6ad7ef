#include "zett/convert/byte_level.hpp"

#include <algorithm>
#include <set>

#include "zett/tok/utf8.hpp"

namespace zett::convert {

using namespace zett::tok;

namespace {

constexpr double kByteScoreGap = 10.0;

ByteLevelConversion unigram_to_byte_level(const TokenizerSpec& t) {
  const UnigramModel& m = t.unigram();
  Vocabulary vocab = m.vocab;
  std::vector<double> scores = m.scores;
  double floor = scores.empty() ? 0.0 : *std::min_element(scores.begin(), scores.end());
  floor -= kByteScoreGap;
  std::size_t added = 0;
  for (int b = 0; b < 256; ++b) {
    std::string byte(1, static_cast<char>(b));
    if (vocab.contains(byte)) continue;
    vocab.add(byte);
    scores.push_back(floor);
    ++added;
  }
  TokenizerSpec out{UnigramModel(std::move(vocab), std::move(scores)), t.pretok, true};
  return {std::move(out), added};
}

ByteLevelConversion bpe_to_byte_level(const TokenizerSpec& t) {
  const BpeModel& m = t.bpe();
  Vocabulary vocab = m.vocab();
  std::size_t added = 0;
  auto ensure = [&](const std::string& token) {
    if (!vocab.contains(token)) {
      vocab.add(token);
      ++added;
    }
  };
  for (int b = 0; b < 256; ++b) ensure(std::string(1, static_cast<char>(b)));

  // Only single multi-byte characters are reachable units under character
  // segmentation; longer alphabet entries (special tokens) stay unreachable.
  std::set<std::pair<std::size_t, Merge>> assembly;  // ordered by prefix length, then bytes
  for (TokenId id = 0; id < m.vocab().size(); ++id) {
    if (!m.in_alphabet(id)) continue;
    const std::string& symbol = m.vocab().token(id);
    if (symbol.size() < 2) continue;
    auto unit = next_utf8(symbol, 0);
    if (!unit.valid || unit.length != symbol.size()) continue;
    for (std::size_t len = 2; len <= symbol.size(); ++len)
      assembly.insert({len, Merge{symbol.substr(0, len - 1), symbol.substr(len - 1, 1)}});
  }
  std::vector<Merge> merges;
  for (const auto& [len, merge] : assembly) {
    std::string joined = merge.first + merge.second;
    ensure(joined);
    merges.push_back(merge);
  }
  merges.insert(merges.end(), m.merges().begin(), m.merges().end());
  TokenizerSpec out{BpeModel(std::move(vocab), std::move(merges)), t.pretok, true};
  return {std::move(out), added};
}

}  // namespace

ByteLevelConversion to_byte_level(const TokenizerSpec& t) {
  if (t.byte_level) return {t, 0};
  if (t.kind() == ModelKind::Unigram) return unigram_to_byte_level(t);
  return bpe_to_byte_level(t);
}

}  // namespace zett::convert
