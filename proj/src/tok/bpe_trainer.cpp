#include "zett/tok/bpe_trainer.hpp"

#include <map>
#include <set>

#include "zett/common/error.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::tok {

BpeModel train_bpe(const std::vector<PretokenCount>& counts, std::size_t vocab_size, bool byte_units) {
  require(!counts.empty(), ErrorCode::EmptyCorpus, "no pretokens to train on");
  struct Word {
    std::vector<std::string> symbols;
    std::uint64_t count;
  };
  std::vector<Word> words;
  std::set<std::string> alphabet;
  for (const auto& [text, count] : counts) {
    Word w{{}, count};
    for (std::size_t pos = 0; pos < text.size();) {
      std::size_t len = byte_units ? 1 : next_utf8(text, pos).length;
      w.symbols.push_back(text.substr(pos, len));
      alphabet.insert(w.symbols.back());
      pos += len;
    }
    words.push_back(std::move(w));
  }
  std::vector<std::string> tokens(alphabet.begin(), alphabet.end());
  if (byte_units) {
    // Every byte, so the result is byte-level.
    for (int b = 0; b < 256; ++b) alphabet.insert(std::string(1, static_cast<char>(b)));
    tokens.assign(alphabet.begin(), alphabet.end());
  }
  Vocabulary vocab(tokens);
  std::vector<Merge> merges;

  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string_view, std::string_view>, std::uint64_t> pairs;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
    const std::pair<std::string_view, std::string_view>* best = nullptr;
    std::uint64_t best_count = 1;
    for (const auto& [pair, count] : pairs) {
      if (count > best_count && !vocab.contains(std::string(pair.first) + std::string(pair.second))) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;
    Merge merge{std::string(best->first), std::string(best->second)};
    std::string joined = merge.first + merge.second;
    for (auto& w : words) {
      std::vector<std::string> merged;
      merged.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == merge.first && w.symbols[i + 1] == merge.second) {
          merged.push_back(joined);
          ++i;
        } else {
          merged.push_back(std::move(w.symbols[i]));
        }
      }
      w.symbols = std::move(merged);
    }
    vocab.add(joined);
    merges.push_back(std::move(merge));
  }
  return BpeModel(std::move(vocab), std::move(merges));
}

}  // namespace zett::tok
