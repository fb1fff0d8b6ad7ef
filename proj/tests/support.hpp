#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zett/common/rng.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::test {

inline std::filesystem::path data_dir() { return ZETT_DATA_DIR; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("zett_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string random_string(Rng& rng, std::size_t len, std::string_view alphabet) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

inline std::string random_bytes(Rng& rng, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += static_cast<char>(rng.below(256));
  return s;
}

// Unigram model over `alphabet` singles plus random multi-char tokens.
inline tok::UnigramModel random_unigram(Rng& rng, std::string_view alphabet, std::size_t extra, std::size_t max_len,
                                        bool dyadic) {
  tok::Vocabulary vocab;
  std::vector<double> scores;
  auto score = [&] {
    if (dyadic) return -0.25 * double(1 + rng.below(24));
    return -0.1 - 5.0 * rng.uniform();
  };
  for (char c : alphabet) {
    vocab.add(std::string(1, c));
    scores.push_back(score());
  }
  for (std::size_t i = 0; i < extra; ++i) {
    std::string t = random_string(rng, 2 + rng.below(max_len - 1), alphabet);
    if (vocab.contains(t)) continue;
    vocab.add(t);
    scores.push_back(score());
  }
  return tok::UnigramModel(std::move(vocab), std::move(scores));
}

inline tok::Vocabulary vocab_of(std::initializer_list<const char*> tokens) {
  std::vector<std::string> v;
  for (const char* t : tokens) v.emplace_back(t);
  return tok::Vocabulary(std::move(v));
}

}  // namespace zett::test
