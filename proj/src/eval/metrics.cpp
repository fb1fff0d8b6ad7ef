#include "zett/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <unordered_map>

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/tok/io.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::eval {

double BpcResult::bits() const { return nll_nats / std::numbers::ln2; }

double BpcResult::bits_per_char() const {
  require(chars > 0, ErrorCode::NumericFailure, "no predicted characters");
  return bits() / double(chars);
}

double BpcResult::bits_per_byte() const {
  require(bytes > 0, ErrorCode::NumericFailure, "no predicted bytes");
  return bits() / double(bytes);
}

BpcResult evaluate_bpc(const lm::LmParams& lm, const Tensor& phi_in, const Tensor& phi_out,
                       const tok::TokenizerSpec& tok, const std::vector<std::string>& docs) {
  const std::size_t window = lm.cfg.max_seq_len;
  BpcResult r;
  std::vector<lm::Sequence> seqs;
  for (const auto& doc : docs) {
    auto ids = tok::encode(doc, tok);
    if (ids.empty()) continue;
    std::string decoded = tok::decode(ids, tok);
    require(decoded.size() >= doc.size() && decoded.compare(decoded.size() - doc.size(), doc.size(), doc) == 0,
            ErrorCode::Unsegmentable, "tokenizer does not reproduce the document");
    const std::size_t prefix = decoded.size() - doc.size();
    std::vector<char> starts(decoded.size(), 0);
    for (std::size_t pos = prefix; pos < decoded.size(); pos += tok::next_utf8(decoded, pos).length) starts[pos] = 1;
    std::size_t offset = 0;
    for (std::size_t begin = 0; begin < ids.size(); begin += window) {
      std::size_t end = std::min(ids.size(), begin + window);
      for (std::size_t i = begin; i < end; ++i) {
        std::size_t len = tok.vocab().token(ids[i]).size();
        if (i != begin) {
          for (std::size_t b = offset; b < offset + len; ++b)
            if (b >= prefix) {
              ++r.bytes;
              r.chars += starts[b];
            }
        }
        offset += len;
      }
      if (end - begin >= 2) seqs.emplace_back(ids.begin() + begin, ids.begin() + end);
    }
  }
  if (!seqs.empty()) r.nll_nats = lm::total_nll(lm, phi_in, phi_out, seqs, &r.predicted_tokens);
  return r;
}

double bits_per_char(const lm::LmParams& lm, const tok::TokenizerSpec& tok, const std::vector<std::string>& docs) {
  return evaluate_bpc(lm, lm.phi_in->value, lm.phi_out->value, tok, docs).bits_per_char();
}

double bits_per_byte(const lm::LmParams& lm, const tok::TokenizerSpec& tok, const std::vector<std::string>& docs) {
  return evaluate_bpc(lm, lm.phi_in->value, lm.phi_out->value, tok, docs).bits_per_byte();
}

std::size_t token_count(const tok::TokenizerSpec& tok, const std::vector<std::string>& docs) {
  std::size_t n = 0;
  for (const auto& d : docs) n += tok::encode(d, tok).size();
  return n;
}

double delta_length(const tok::TokenizerSpec& a, const tok::TokenizerSpec& b, const std::vector<std::string>& docs) {
  std::size_t la = token_count(a, docs);
  require(la > 0, ErrorCode::EmptyCorpus, "corpus encodes to no tokens");
  std::size_t lb = token_count(b, docs);
  return (double(lb) - double(la)) / double(la);
}

tok::UnigramModel rescore_unigram(const tok::Vocabulary& vocab, const std::vector<std::string>& docs,
                                  const tok::PretokenizerConfig& pretok) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "rescoring needs a corpus");
  std::unordered_map<std::string_view, std::size_t> index;
  std::size_t max_len = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    index.emplace(vocab.token(i), i);
    max_len = std::max(max_len, vocab.token(i).size());
  }
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& pc : tok::count_pretokens(docs, pretok)) {
    std::string_view s = pc.text;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t len = 1; len <= max_len && i + len <= s.size(); ++len)
        if (auto it = index.find(s.substr(i, len)); it != index.end()) counts[it->second] += double(pc.count);
  }
  double total = 0;
  for (double c : counts) total += c;
  require(total > 0, ErrorCode::EmptyCorpus, "no vocabulary token occurs in the corpus");
  std::vector<double> scores(vocab.size());
  double min_seen = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) min_seen = std::min(min_seen, scores[i] = std::log(counts[i] / total));
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] == 0) scores[i] = min_seen - 10.0;
  return tok::UnigramModel(vocab, std::move(scores));
}

FlopsEstimate flops_estimate(const lm::LmConfig& c) {
  const double d = double(c.d_model), f = double(c.ffn_dim), v = double(c.vocab_size);
  // wq wk wv wo + bo, two layer norms, w1 b1 w2 b2
  double per_layer = 4 * d * d + d + 4 * d + 2 * d * f + f + d;
  double body = double(c.layers) * per_layer + 2 * d;
  double embed = v * d * (c.tied_embeddings ? 1 : 2) + double(c.max_seq_len) * d;
  return {body + embed, 2 * body + 2 * d * v};
}

FlopsEstimate flops_estimate(const hyper::HypernetConfig& c, std::size_t source_vocab) {
  const double d = double(c.d_model), f = double(c.ffn_dim);
  double per_layer = 4 * d * d + d + 4 * d + 2 * d * f + f + d;
  double heads = 2 * (d * d + d);
  double body = double(c.layers) * per_layer + heads;
  double embed = double(source_vocab) * d + double(c.max_decomp_len + (c.lang_embedding ? 1 : 0)) * d +
                 double(c.n_langs) * d;
  return {body + embed, 2 * body};
}

double batch_flops(double n, double s, double main_per_token, double k, double t, double hyper_per_token) {
  return n * s * main_per_token + k * t * hyper_per_token;
}

std::string EvalReport::to_json() const {
  nlohmann::json j{{"metric", metric},
                   {"value", value},
                   {"tokenizers", tokenizer_ids},
                   {"corpus", corpus_id},
                   {"config_hash", config_hash}};
  return j.dump(2);
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string tokenizer_id(const tok::TokenizerSpec& t) { return content_hash(tok::tokenizer_to_json(t)); }

std::string corpus_id(const std::vector<std::string>& docs) {
  std::string all;
  for (const auto& d : docs) {
    all += d;
    all += '\n';
  }
  return content_hash(all);
}

}  // namespace zett::eval
