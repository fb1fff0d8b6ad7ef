#include "zett/sampler/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "zett/common/error.hpp"

namespace zett::sampler {

using namespace zett::tok;

void SamplerConfig::validate() const {
  require(batch_size >= 1 && pool_size >= batch_size, ErrorCode::InvalidArgument, "sampler needs n >= m >= 1");
  require(vocab_size >= 1, ErrorCode::InvalidArgument, "sampler vocab size must be >= 1");
  require(max_token_len >= 1, ErrorCode::InvalidArgument, "max token length must be >= 1");
  require(sigma >= 0 && std::isfinite(mu), ErrorCode::InvalidArgument, "noise needs finite mu and sigma >= 0");
}

namespace {

template <typename Fn>
void for_each_substring(const std::string& text, std::size_t max_len, const PretokenizerConfig& pretok, Fn&& fn) {
  std::string storage;
  for (auto piece : pretokenize_views(text, pretok, storage))
    for (std::size_t start = 0; start < piece.size(); ++start)
      for (std::size_t len = 1; len <= max_len && start + len <= piece.size(); ++len) fn(piece.substr(start, len));
}

}  // namespace

SubstringCounts count_substrings(const std::vector<std::string>& texts, std::size_t max_len,
                                                     const PretokenizerConfig& pretok) {
  SubstringCounts counts;
  for (const auto& t : texts) for_each_substring(t, max_len, pretok, [&](std::string_view s) { ++counts[std::string(s)]; });
  return counts;
}

SamplerState::SamplerState(SamplerConfig cfg) : cfg_(std::move(cfg)), rng_(Rng(cfg_.seed).split("sampler")) {
  cfg_.validate();
}

void SamplerState::apply(const std::string& text, std::int64_t sign) {
  for_each_substring(text, cfg_.max_token_len, cfg_.pretok, [&](std::string_view s) {
    auto it = counts_.find(s);
    if (it == counts_.end()) it = counts_.emplace(std::string(s), 0).first;
    it->second += sign;
    if (it->second == 0) counts_.erase(it);
  });
}

void SamplerState::advance(const std::vector<std::string>& batch) {
  require(batch.size() == cfg_.batch_size, ErrorCode::InvalidArgument, "advance needs exactly m texts");
  while (queue_.size() + batch.size() > cfg_.pool_size) {
    apply(queue_.front(), -1);
    queue_.pop_front();
  }
  for (const auto& text : batch) {
    apply(text, +1);
    queue_.push_back(text);
  }
}

UnigramModel SamplerState::sample_tokenizer() {
  require(counts_.size() >= cfg_.vocab_size, ErrorCode::InsufficientSubstrings,
          std::to_string(counts_.size()) + " substrings for vocab size " + std::to_string(cfg_.vocab_size));
  double total = 0;
  for (const auto& [s, c] : counts_) total += double(c);

  struct Candidate {
    const std::string* text;
    std::int64_t count;
    double score;
  };
  double z = rng_.lognormal(cfg_.mu, cfg_.sigma);
  std::vector<Candidate> forced, rest;
  for (const auto& [s, c] : counts_) {
    double p = double(c) / total + z * rng_.normal();
    (s.size() == 1 ? forced : rest).push_back({&s, c, p});
  }
  require(forced.size() <= cfg_.vocab_size, ErrorCode::InsufficientSubstrings,
          "vocab size smaller than the number of observed bytes");
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.count != b.count) return a.count > b.count;
    return *a.text < *b.text;
  };
  std::size_t take = std::min(rest.size(), cfg_.vocab_size - forced.size());
  std::partial_sort(rest.begin(), rest.begin() + take, rest.end(), better);
  rest.resize(take);

  std::vector<Candidate> chosen = std::move(forced);
  chosen.insert(chosen.end(), rest.begin(), rest.end());
  std::sort(chosen.begin(), chosen.end(), better);
  Vocabulary vocab;
  std::vector<double> scores;
  scores.reserve(chosen.size());
  for (const auto& c : chosen) {
    vocab.add(*c.text);
    scores.push_back(c.score);
  }
  if (cfg_.log_scores) {
    double floor = 0;
    for (double& s : scores)
      if (s > 0) floor = std::min(floor, s = std::log(s));
    for (std::size_t i = 0; i < chosen.size(); ++i)
      if (chosen[i].score <= 0) scores[i] = floor - 10.0;
  }
  return UnigramModel(std::move(vocab), std::move(scores));
}

TrainingStream::TrainingStream(const std::vector<std::string>& docs, SamplerConfig cfg)
    : docs_(&docs), shuffle_rng_(Rng(cfg.seed).split("stream")), state_(cfg) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "training stream needs documents");
  order_.resize(docs.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();
}

StreamItem TrainingStream::next() {
  std::vector<std::string> batch;
  const std::size_t m = state_.config().batch_size;
  while (batch.size() < m) {
    if (cursor_ == order_.size()) {
      for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[shuffle_rng_.below(i)]);
      cursor_ = 0;
    }
    batch.push_back((*docs_)[order_[cursor_++]]);
  }
  state_.advance(batch);
  auto model = state_.sample_tokenizer();
  return {std::move(batch), TokenizerSpec{std::move(model), state_.config().pretok, false}};
}

double jaccard(const Vocabulary& a, const Vocabulary& b) {
  std::size_t common = 0;
  for (const auto& t : a.tokens()) common += b.contains(t);
  std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 1.0 : double(common) / double(uni);
}

}  // namespace zett::sampler
