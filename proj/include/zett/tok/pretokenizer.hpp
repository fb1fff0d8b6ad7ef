#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace zett::tok {

enum class CharClass : unsigned char { Other = 0, Letter = 1, Mark = 2, Number = 3, Space = 4 };

CharClass classify(char32_t cp);

struct PretokenizerConfig {
  std::string rule = "gpt2m";
  bool prefix_space = false;
  int whitespace_run_max = 16;

  bool operator==(const PretokenizerConfig&) const = default;
};

// Splits text into pretokens with the "gpt2m" rule (see docs/pretokenizer.md).
// Pretokens are views into `storage` when a prefix space is added, otherwise
// into `text`; use the std::string overload when lifetimes are awkward.
std::vector<std::string_view> pretokenize_views(std::string_view text, const PretokenizerConfig& cfg,
                                                std::string& storage);

std::vector<std::string> pretokenize(std::string_view text, const PretokenizerConfig& cfg);

// The text the pretokens concatenate to (input plus optional prefix space).
std::string normalize(std::string_view text, const PretokenizerConfig& cfg);

}  // namespace zett::tok
