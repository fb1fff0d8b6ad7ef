#include "zett/convert/unigramify.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/convert/preservation.hpp"

namespace zett::convert {

using namespace zett::tok;

namespace {

struct Edge {
  std::size_t end;
  TokenId id;
};

// edges[start] = every vocab token starting at byte `start`.
std::vector<std::vector<Edge>> token_lattice(std::string_view x, const Vocabulary& vocab) {
  std::vector<std::vector<Edge>> edges(x.size());
  const std::size_t max_len = vocab.max_token_bytes();
  for (std::size_t start = 0; start < x.size(); ++start)
    for (std::size_t end = start + 1; end <= x.size() && end - start <= max_len; ++end)
      if (auto id = vocab.find(x.substr(start, end - start))) edges[start].push_back({end, *id});
  return edges;
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  return a > std::numeric_limits<std::uint64_t>::max() - b ? std::numeric_limits<std::uint64_t>::max() : a + b;
}

void enumerate_all(const std::vector<std::vector<Edge>>& edges, std::size_t pos, std::size_t n, Decomposition& path,
                   std::vector<Decomposition>& out) {
  if (pos == n) {
    out.push_back(path);
    return;
  }
  for (const Edge& e : edges[pos]) {
    path.push_back(e.id);
    enumerate_all(edges, e.end, n, path, out);
    path.pop_back();
  }
}

std::vector<Decomposition> k_best(const std::vector<std::vector<Edge>>& edges, std::size_t n,
                                  std::span<const double> scores, std::size_t k) {
  struct Entry {
    double score;
    std::size_t count;
    std::size_t start;
    std::size_t rank;  // index into cells[start]
    TokenId id;
  };
  std::vector<std::vector<Entry>> cells(n + 1);
  cells[0].push_back({0.0, 0, 0, 0, 0});
  // Incoming edges per end position.
  std::vector<std::vector<std::pair<std::size_t, TokenId>>> incoming(n + 1);
  for (std::size_t start = 0; start < n; ++start)
    for (const Edge& e : edges[start]) incoming[e.end].push_back({start, e.id});
  auto better = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.count != b.count) return a.count < b.count;
    return a.start < b.start;
  };
  for (std::size_t end = 1; end <= n; ++end) {
    std::vector<Entry> cand;
    for (auto [start, id] : incoming[end])
      for (std::size_t r = 0; r < cells[start].size(); ++r)
        cand.push_back({cells[start][r].score + scores[id], cells[start][r].count + 1, start, r, id});
    std::size_t keep = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(), better);
    cand.resize(keep);
    cells[end] = std::move(cand);
  }
  std::vector<Decomposition> out;
  for (std::size_t r = 0; r < cells[n].size(); ++r) {
    Decomposition d;
    std::size_t pos = n, rank = r;
    while (pos > 0) {
      const Entry& e = cells[pos][rank];
      d.push_back(e.id);
      pos = e.start;
      rank = e.rank;
    }
    std::reverse(d.begin(), d.end());
    out.push_back(std::move(d));
  }
  return out;
}

struct Item {
  std::string text;
  std::uint64_t count;
  Decomposition reference;
  bool complete;  // every competitor enumerated
  std::set<std::vector<std::pair<std::uint32_t, double>>> seen;
};

void add_constraint(Item& item, const Decomposition& competitor, LpProblem& problem,
                    std::span<const double> scores, bool only_violated) {
  auto c = competitor_constraint(item.reference, competitor);
  if (!c) return;
  if (only_violated) {
    double v = problem.delta;
    for (auto [var, coef] : c->terms) v += coef * scores[var];
    if (v <= 0) return;
  }
  if (!item.seen.insert(c->terms).second) return;
  problem.constraints.push_back(std::move(*c));
}

}  // namespace

std::uint64_t count_decompositions(std::string_view pretoken, const Vocabulary& vocab) {
  auto edges = token_lattice(pretoken, vocab);
  const std::size_t n = pretoken.size();
  std::vector<std::uint64_t> ways(n + 1, 0);
  ways[0] = 1;
  for (std::size_t start = 0; start < n; ++start) {
    if (!ways[start]) continue;
    for (const Edge& e : edges[start]) ways[e.end] = saturating_add(ways[e.end], ways[start]);
  }
  return n == 0 ? 1 : ways[n];
}

std::vector<Decomposition> k_best_decompositions(std::string_view pretoken, const Vocabulary& vocab,
                                                 std::span<const double> scores, std::size_t k) {
  require(scores.size() == vocab.size(), ErrorCode::InvalidArgument, "score/vocab size mismatch");
  if (k == 0) return {};
  return k_best(token_lattice(pretoken, vocab), pretoken.size(), scores, k);
}

DecompositionSet enumerate_decompositions(std::string_view pretoken, const Vocabulary& vocab,
                                          const Decomposition& reference, std::size_t cap,
                                          std::span<const double> scores) {
  require(cap >= 1, ErrorCode::InvalidArgument, "decomposition cap must be >= 1");
  auto edges = token_lattice(pretoken, vocab);
  DecompositionSet set{std::string(pretoken), {}, reference};
  std::uint64_t total = count_decompositions(pretoken, vocab);
  require(total > 0, ErrorCode::Unsegmentable, "pretoken has no decomposition over the vocabulary");
  if (total <= cap) {
    Decomposition path;
    enumerate_all(edges, 0, pretoken.size(), path, set.decomps);
    if (std::find(set.decomps.begin(), set.decomps.end(), reference) == set.decomps.end())
      set.decomps.push_back(reference);
    return set;
  }
  set.decomps.push_back(reference);
  for (auto& d : k_best(edges, pretoken.size(), scores, cap)) {
    if (set.decomps.size() >= cap) break;
    if (d != reference) set.decomps.push_back(std::move(d));
  }
  return set;
}

std::optional<LpConstraint> competitor_constraint(const Decomposition& reference, const Decomposition& competitor) {
  std::map<std::uint32_t, double> coef;
  for (TokenId id : competitor) coef[id] += 1.0;
  for (TokenId id : reference) coef[id] -= 1.0;
  LpConstraint c;
  for (auto [var, v] : coef)
    if (v != 0.0) c.terms.emplace_back(var, v);
  if (c.terms.empty()) return std::nullopt;
  return c;
}

UnigramifyResult unigramify(const TokenizerSpec& source, const std::vector<std::string>& docs,
                            const UnigramifyOptions& opts) {
  auto counts = count_pretokens(docs, source.pretok);
  require(!counts.empty(), ErrorCode::EmptyCorpus, "corpus has no pretokens");
  return unigramify(source, counts, opts);
}

UnigramifyResult unigramify(const TokenizerSpec& source, const std::vector<PretokenCount>& pretokens,
                            const UnigramifyOptions& opts) {
  require(opts.top_n >= 1, ErrorCode::InvalidArgument, "top_n must be >= 1");
  require(!pretokens.empty(), ErrorCode::EmptyCorpus, "no pretokens");
  const Vocabulary& vocab = source.vocab();

  LpProblem problem;
  problem.delta = opts.delta;
  if (source.kind() == ModelKind::Unigram) problem.prior = source.unigram().scores;
  else problem.prior.assign(vocab.size(), opts.bpe_prior_score);

  UnigramifyResult result;
  std::vector<Item> items;
  std::vector<PretokenCount> used;
  for (std::size_t i = 0; i < pretokens.size() && i < opts.top_n; ++i) {
    const auto& p = pretokens[i];
    ++result.pretokens;
    Decomposition ref;
    try {
      ref = segment(p.text, source);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unsegmentable) throw;
      ++result.skipped;
      continue;
    }
    used.push_back(p);
    Item item{p.text, p.count, ref, false, {}};
    auto set = enumerate_decompositions(p.text, vocab, ref, opts.enumeration_cap, problem.prior);
    item.complete = count_decompositions(p.text, vocab) <= opts.enumeration_cap;
    for (const auto& d : set.decomps) add_constraint(item, d, problem, problem.prior, false);
    items.push_back(std::move(item));
  }

  LpOptions lp = opts.lp;
  LpSolution sol = solve_lp(problem, lp);
  result.backend = sol.backend;
  for (result.rounds = 1; result.rounds < opts.max_rounds; ++result.rounds) {
    std::size_t before = problem.constraints.size();
    for (auto& item : items) {
      if (item.complete) continue;
      for (const auto& d : k_best_decompositions(item.text, vocab, sol.scores, opts.k_best))
        add_constraint(item, d, problem, sol.scores, true);
    }
    if (problem.constraints.size() == before) break;
    lp.warm_start = &sol.scores;
    LpSolution next = solve_lp(problem, lp);
    sol = std::move(next);
    lp.warm_start = nullptr;
    result.backend = sol.backend;
  }

  result.constraints = problem.constraints.size();
  result.residual_loss = hinge_objective(problem, sol.scores);
  result.tokenizer = TokenizerSpec{UnigramModel(vocab, std::move(sol.scores)), source.pretok, false};
  result.tokenizer.byte_level = covers_all_bytes(result.tokenizer);
  if (!used.empty()) {
    result.preserved = preservation_rate(source, result.tokenizer, used, Equivalence::Sequence);
    result.preserved_multiset = preservation_rate(source, result.tokenizer, used, Equivalence::Multiset);
  }
  return result;
}

std::string report_json(const UnigramifyResult& r) {
  nlohmann::json j{{"residual_loss", r.residual_loss}, {"preserved", r.preserved}, {"skipped", r.skipped}};
  return j.dump(2);
}

}  // namespace zett::convert
