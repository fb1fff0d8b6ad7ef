#include "zett/tok/pretokenizer.hpp"

#include <algorithm>
#include <cstdint>

#include "zett/common/error.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::tok {
namespace {

struct CharRange {
  char32_t lo;
  char32_t hi;
  unsigned char cls;
};

#include "unicode_tables.inc"

struct Unit {
  std::size_t offset;
  std::size_t length;
  char32_t cp;
  CharClass cls;
};

// Class of a run-forming unit: letters and marks share one run.
int run_kind(CharClass c) {
  switch (c) {
    case CharClass::Letter:
    case CharClass::Mark: return 0;
    case CharClass::Number: return 1;
    case CharClass::Other: return 2;
    case CharClass::Space: return 3;
  }
  return 2;
}

std::size_t match_contraction(const std::vector<Unit>& u, std::size_t i) {
  if (u[i].cp != U'\'' || i + 1 >= u.size()) return 0;
  char32_t a = u[i + 1].cp;
  if (a == U's' || a == U't' || a == U'm' || a == U'd') return 2;
  if (i + 2 < u.size()) {
    char32_t b = u[i + 2].cp;
    if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l')) return 3;
  }
  return 0;
}

std::size_t run_end(const std::vector<Unit>& u, std::size_t i) {
  int kind = run_kind(u[i].cls);
  std::size_t j = i;
  while (j < u.size() && run_kind(u[j].cls) == kind) ++j;
  return j;
}

}  // namespace

CharClass classify(char32_t cp) {
  auto it = std::upper_bound(std::begin(kCharRanges), std::end(kCharRanges), cp,
                             [](char32_t v, const CharRange& r) { return v < r.lo; });
  if (it == std::begin(kCharRanges)) return CharClass::Other;
  --it;
  if (cp <= it->hi) return static_cast<CharClass>(it->cls);
  return CharClass::Other;
}

std::string normalize(std::string_view text, const PretokenizerConfig& cfg) {
  if (cfg.prefix_space && !text.empty()) return " " + std::string(text);
  return std::string(text);
}

std::vector<std::string_view> pretokenize_views(std::string_view text, const PretokenizerConfig& cfg,
                                                std::string& storage) {
  require(cfg.rule == "gpt2m", ErrorCode::InvalidArgument, "unknown pretokenizer rule: " + cfg.rule);
  require(cfg.whitespace_run_max >= 1, ErrorCode::InvalidArgument, "whitespace_run_max must be >= 1");
  std::vector<std::string_view> out;
  if (text.empty()) return out;
  std::string_view s = text;
  if (cfg.prefix_space) {
    storage = normalize(text, cfg);
    s = storage;
  }

  std::vector<Unit> units;
  units.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    Utf8Unit d = next_utf8(s, pos);
    CharClass cls = d.valid ? classify(d.code_point) : CharClass::Other;
    units.push_back({pos, d.length, d.valid ? d.code_point : char32_t(0xFFFFFFFF), cls});
    pos += d.length;
  }

  auto emit = [&](std::size_t a, std::size_t b) {
    std::size_t begin = units[a].offset;
    std::size_t end = b < units.size() ? units[b].offset : s.size();
    out.push_back(s.substr(begin, end - begin));
  };
  auto emit_space = [&](std::size_t a, std::size_t b) {
    auto limit = static_cast<std::size_t>(cfg.whitespace_run_max);
    for (std::size_t k = a; k < b; k += limit) emit(k, std::min(b, k + limit));
  };

  std::size_t i = 0;
  const std::size_t n = units.size();
  while (i < n) {
    if (std::size_t c = match_contraction(units, i)) {
      emit(i, i + c);
      i += c;
      continue;
    }
    const Unit& u = units[i];
    if (u.cls == CharClass::Space) {
      // " ?X+" for a single space glued to the following non-space run.
      if (u.cp == U' ' && i + 1 < n && units[i + 1].cls != CharClass::Space) {
        std::size_t j = run_end(units, i + 1);
        emit(i, j);
        i = j;
        continue;
      }
      std::size_t j = run_end(units, i);
      if (j == n || j - i == 1) {
        emit_space(i, j);
        i = j;
      } else {
        // "\s+(?!\S)": leave the last whitespace for the next match.
        emit_space(i, j - 1);
        i = j - 1;
      }
      continue;
    }
    std::size_t j = run_end(units, i);
    emit(i, j);
    i = j;
  }
  return out;
}

std::vector<std::string> pretokenize(std::string_view text, const PretokenizerConfig& cfg) {
  std::string storage;
  auto views = pretokenize_views(text, cfg, storage);
  return {views.begin(), views.end()};
}

}  // namespace zett::tok
