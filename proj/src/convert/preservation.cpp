#include "zett/convert/preservation.hpp"

#include <algorithm>

#include "zett/common/error.hpp"
#include "zett/common/rng.hpp"

namespace zett::convert {

using namespace zett::tok;

std::optional<std::vector<std::string>> segment_strings(std::string_view pretoken, const TokenizerSpec& t) {
  std::vector<TokenId> ids;
  try {
    ids = segment(pretoken, t);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Unsegmentable) throw;
    return std::nullopt;
  }
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(t.vocab().token(id));
  return out;
}

bool equivalent(const std::optional<std::vector<std::string>>& a, const std::optional<std::vector<std::string>>& b,
                Equivalence eq) {
  if (!a || !b) return !a && !b;
  if (eq == Equivalence::Sequence) return *a == *b;
  auto x = *a, y = *b;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return x == y;
}

double preservation_rate(const TokenizerSpec& a, const TokenizerSpec& b, const std::vector<std::string>& docs,
                         std::size_t n, std::uint64_t seed, Equivalence eq) {
  require(n >= 1, ErrorCode::InvalidArgument, "preservation sample size must be >= 1");
  auto counts = count_pretokens(docs, a.pretok);
  require(!counts.empty(), ErrorCode::EmptyCorpus, "corpus has no pretokens");
  std::vector<std::uint64_t> cumulative;
  cumulative.reserve(counts.size());
  std::uint64_t total = 0;
  for (const auto& c : counts) cumulative.push_back(total += c.count);

  std::vector<int> verdict(counts.size(), -1);
  Rng rng = Rng(seed).split("preservation");
  std::size_t preserved = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t r = rng.below(total);
    std::size_t k = std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
    if (verdict[k] < 0)
      verdict[k] = equivalent(segment_strings(counts[k].text, a), segment_strings(counts[k].text, b), eq) ? 1 : 0;
    preserved += verdict[k];
  }
  return double(preserved) / double(n);
}

double preservation_rate(const TokenizerSpec& a, const TokenizerSpec& b, const std::vector<PretokenCount>& pretokens,
                         Equivalence eq) {
  require(!pretokens.empty(), ErrorCode::EmptyCorpus, "no pretokens");
  double total = 0, preserved = 0;
  for (const auto& p : pretokens) {
    total += double(p.count);
    if (equivalent(segment_strings(p.text, a), segment_strings(p.text, b), eq)) preserved += double(p.count);
  }
  return preserved / total;
}

}  // namespace zett::convert
