#include "zett/tok/unigram.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "zett/common/error.hpp"

namespace zett::tok {

UnigramModel::UnigramModel(Vocabulary v, std::vector<double> s) : vocab(std::move(v)), scores(std::move(s)) {
  require(vocab.size() == scores.size(), ErrorCode::InvalidArgument, "unigram scores/vocab size mismatch");
  for (double x : scores) require(std::isfinite(x), ErrorCode::InvalidArgument, "non-finite unigram score");
}

namespace {

// Path score kept as an unevaluated sum hi + lo (TwoSum), so that
// decompositions made of the same tokens in a different order compare equal
// instead of differing in the last bit.
struct PathScore {
  double hi = 0.0;
  double lo = 0.0;

  PathScore plus(double x) const {
    double s = hi + x;
    double bp = s - hi;
    double err = (hi - (s - bp)) + (x - bp);
    double l = lo + err;
    double h = s + l;
    return {h, l - (h - s)};
  }
  bool operator==(const PathScore&) const = default;
  bool operator>(const PathScore& o) const { return hi > o.hi || (hi == o.hi && lo > o.lo); }
};

struct Cell {
  PathScore score;
  std::size_t count = 0;
  std::size_t prev = 0;  // start offset of the last token
  TokenId id = 0;
  bool reachable = false;
};

std::vector<std::size_t> cuts_to(const std::vector<Cell>& cells, std::size_t end) {
  std::vector<std::size_t> cuts;
  for (std::size_t pos = end; pos > 0; pos = cells[pos].prev)
    if (cells[pos].prev > 0) cuts.push_back(cells[pos].prev);
  std::reverse(cuts.begin(), cuts.end());
  return cuts;
}

[[noreturn]] void unsegmentable(std::string_view pretoken) {
  fail(ErrorCode::Unsegmentable, "no decomposition for pretoken of " + std::to_string(pretoken.size()) + " bytes");
}

}  // namespace

std::vector<TokenId> unigram_segment(std::string_view pretoken, const UnigramModel& model) {
  const std::size_t n = pretoken.size();
  if (n == 0) return {};
  const std::size_t max_len = model.vocab.max_token_bytes();
  std::vector<Cell> cells(n + 1);
  cells[0].reachable = true;

  for (std::size_t end = 1; end <= n; ++end) {
    Cell& best = cells[end];
    std::size_t first = end > max_len ? end - max_len : 0;
    for (std::size_t start = first; start < end; ++start) {
      const Cell& from = cells[start];
      if (!from.reachable) continue;
      auto id = model.vocab.find(pretoken.substr(start, end - start));
      if (!id) continue;
      PathScore score = from.score.plus(model.scores[*id]);
      std::size_t count = from.count + 1;
      bool better = !best.reachable || score > best.score || (score == best.score && count < best.count);
      if (!better && score == best.score && count == best.count) {
        auto current = cuts_to(cells, end);
        Cell saved = best;
        best.prev = start;
        auto candidate = cuts_to(cells, end);
        best = saved;
        better = candidate < current;
      }
      if (better) best = {score, count, start, *id, true};
    }
  }
  if (!cells[n].reachable) unsegmentable(pretoken);

  std::vector<TokenId> ids;
  for (std::size_t pos = n; pos > 0; pos = cells[pos].prev) ids.push_back(cells[pos].id);
  std::reverse(ids.begin(), ids.end());
  return ids;
}

std::vector<TokenId> unigram_segment_brute(std::string_view pretoken, const UnigramModel& model,
                                           std::size_t max_len) {
  require(pretoken.size() <= max_len, ErrorCode::InputTooLong,
          "brute-force segmentation limited to " + std::to_string(max_len) + " bytes");
  if (pretoken.empty()) return {};

  struct Best {
    bool found = false;
    PathScore score;
    std::vector<TokenId> ids;
    std::vector<std::size_t> cuts;
  } best;

  std::vector<TokenId> ids;
  std::vector<std::size_t> cuts;
  std::function<void(std::size_t)> visit = [&](std::size_t pos) {
    if (pos == pretoken.size()) {
      PathScore score;
      for (TokenId id : ids) score = score.plus(model.scores[id]);
      bool better = !best.found || score > best.score ||
                    (score == best.score && (ids.size() < best.ids.size() ||
                                             (ids.size() == best.ids.size() && cuts < best.cuts)));
      if (better) best = {true, score, ids, cuts};
      return;
    }
    for (std::size_t end = pos + 1; end <= pretoken.size(); ++end) {
      auto id = model.vocab.find(pretoken.substr(pos, end - pos));
      if (!id) continue;
      ids.push_back(*id);
      if (end < pretoken.size()) cuts.push_back(end);
      visit(end);
      if (end < pretoken.size()) cuts.pop_back();
      ids.pop_back();
    }
  };
  visit(0);
  if (!best.found) unsegmentable(pretoken);
  return best.ids;
}

}  // namespace zett::tok
