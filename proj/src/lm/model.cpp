#include "zett/lm/model.hpp"

#include <cmath>
#include <unordered_map>

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/common/json_fields.hpp"
#include "zett/grad/checkpoint.hpp"
#include "zett/tok/io.hpp"

namespace zett::lm {

using nlohmann::json;

void LmConfig::validate() const {
  require(layers <= 64, ErrorCode::InvalidArgument, "layers must be <= 64");
  require(d_model > 0 && heads > 0 && ffn_dim > 0 && max_seq_len > 0 && vocab_size > 0, ErrorCode::InvalidArgument,
          "LM dimensions must be positive");
  require(d_model % heads == 0, ErrorCode::InvalidArgument, "d_model must be divisible by heads");
}

std::string lm_config_to_json(const LmConfig& c) {
  return json{{"layers", c.layers},       {"d_model", c.d_model},       {"heads", c.heads},
              {"ffn_dim", c.ffn_dim},     {"max_seq_len", c.max_seq_len}, {"tied_embeddings", c.tied_embeddings},
              {"vocab_size", c.vocab_size}}
      .dump();
}

LmConfig lm_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string("LM config: ") + e.what());
  }
  LmConfig c;
  JsonFields f(j, "lm");
  f.get("layers", c.layers).get("d_model", c.d_model).get("heads", c.heads).get("ffn_dim", c.ffn_dim);
  f.get("max_seq_len", c.max_seq_len).get("tied_embeddings", c.tied_embeddings).get("vocab_size", c.vocab_size);
  f.finish();
  c.validate();
  return c;
}

LmParams with_embeddings(const LmParams& p, const Tensor& in, const Tensor& out) {
  require(in.shape.size() == 2 && in.shape[1] == p.cfg.d_model, ErrorCode::ShapeMismatch, "embedding width mismatch");
  require(p.cfg.tied_embeddings || out.shape == in.shape, ErrorCode::ShapeMismatch, "input/output embedding shapes differ");
  LmParams c = p.clone();
  c.cfg.vocab_size = in.shape[0];
  c.phi_in = grad::make_param(c.phi_in->name, in);
  c.phi_out = p.cfg.tied_embeddings ? c.phi_in : grad::make_param(c.phi_out->name, out);
  return c;
}

std::vector<Parameter> LmParams::psi() const {
  std::vector<Parameter> out = {pos};
  for (const auto& b : blocks)
    out.insert(out.end(), {b.ln1_g, b.ln1_b, b.wq, b.wk, b.wv, b.wo, b.bo, b.ln2_g, b.ln2_b, b.w1, b.b1, b.w2, b.b2});
  out.push_back(lnf_g);
  out.push_back(lnf_b);
  return out;
}

std::vector<Parameter> LmParams::embeddings() const {
  if (phi_out == phi_in) return {phi_in};
  return {phi_in, phi_out};
}

std::vector<Parameter> LmParams::all() const {
  auto out = embeddings();
  auto rest = psi();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

LmParams LmParams::clone() const {
  auto copy = [](const Parameter& p) { return std::make_shared<grad::ParamData>(*p); };
  LmParams c = *this;
  c.phi_in = copy(phi_in);
  c.phi_out = phi_out == phi_in ? c.phi_in : copy(phi_out);
  c.pos = copy(pos);
  for (auto& b : c.blocks)
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1,
                         &b.w2, &b.b2})
      *p = copy(*p);
  c.lnf_g = copy(lnf_g);
  c.lnf_b = copy(lnf_b);
  return c;
}

void LmParams::set_psi_trainable(bool trainable) const {
  for (const auto& p : psi()) p->trainable = trainable;
}

LmParams init_lm(const LmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng(seed).split("lm-init");
  const std::size_t d = cfg.d_model, f = cfg.ffn_dim;
  const double std0 = 0.02;
  const double std_out = 0.02 / std::sqrt(2.0 * double(std::max<std::size_t>(cfg.layers, 1)));
  auto matrix = [&](std::string name, grad::Shape s, double stddev) {
    return grad::make_param(std::move(name), Tensor::randn(std::move(s), rng, stddev));
  };
  auto vec = [](std::string name, std::size_t n, double fill) {
    return grad::make_param(std::move(name), Tensor({n}, fill), false);
  };
  LmParams p;
  p.cfg = cfg;
  p.phi_in = matrix(cfg.tied_embeddings ? "embed.tied" : "embed.in", {cfg.vocab_size, d}, std0);
  p.phi_out = cfg.tied_embeddings ? p.phi_in : matrix("embed.out", {cfg.vocab_size, d}, std0);
  p.pos = matrix("pos", {cfg.max_seq_len, d}, std0);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::string pre = "block." + std::to_string(l) + ".";
    LmBlock b;
    b.ln1_g = vec(pre + "ln1.g", d, 1.0);
    b.ln1_b = vec(pre + "ln1.b", d, 0.0);
    b.wq = matrix(pre + "wq", {d, d}, std0);
    b.wk = matrix(pre + "wk", {d, d}, std0);
    b.wv = matrix(pre + "wv", {d, d}, std0);
    b.wo = matrix(pre + "wo", {d, d}, std_out);
    b.bo = vec(pre + "bo", d, 0.0);
    b.ln2_g = vec(pre + "ln2.g", d, 1.0);
    b.ln2_b = vec(pre + "ln2.b", d, 0.0);
    b.w1 = matrix(pre + "w1", {d, f}, std0);
    b.b1 = vec(pre + "b1", f, 0.0);
    b.w2 = matrix(pre + "w2", {f, d}, std_out);
    b.b2 = vec(pre + "b2", d, 0.0);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = vec("lnf.g", d, 1.0);
  p.lnf_b = vec("lnf.b", d, 0.0);
  return p;
}

PackedBatch pack(std::span<const Sequence> seqs, std::size_t max_seq_len) {
  PackedBatch b;
  for (const auto& s : seqs) {
    require(s.size() <= max_seq_len, ErrorCode::SequenceTooLong,
            "sequence of " + std::to_string(s.size()) + " tokens exceeds max_seq_len " + std::to_string(max_seq_len));
    if (s.empty()) continue;
    b.segments.push_back({b.ids.size(), s.size()});
    for (std::size_t i = 0; i < s.size(); ++i) {
      b.ids.push_back(s[i]);
      b.positions.push_back(static_cast<std::uint32_t>(i));
      b.labels.push_back(i + 1 < s.size() ? static_cast<std::int32_t>(s[i + 1]) : -1);
    }
  }
  return b;
}

Var lm_hidden(Tape& t, const LmParams& p, Var phi_in, const PackedBatch& batch) {
  const LmConfig& cfg = p.cfg;
  Var x = t.add(t.gather(phi_in, batch.ids), t.gather(t.param(p.pos), batch.positions));
  for (const auto& b : p.blocks) {
    Var h = t.layer_norm(x, t.param(b.ln1_g), t.param(b.ln1_b));
    Var q = t.matmul(h, t.param(b.wq));
    Var k = t.matmul(h, t.param(b.wk));
    Var v = t.matmul(h, t.param(b.wv));
    Var a = t.attention(q, k, v, batch.segments, cfg.heads, true);
    x = t.add(x, t.add_bias(t.matmul(a, t.param(b.wo)), t.param(b.bo)));
    h = t.layer_norm(x, t.param(b.ln2_g), t.param(b.ln2_b));
    Var f = t.gelu(t.add_bias(t.matmul(h, t.param(b.w1)), t.param(b.b1)));
    x = t.add(x, t.add_bias(t.matmul(f, t.param(b.w2)), t.param(b.b2)));
  }
  return t.layer_norm(x, t.param(p.lnf_g), t.param(p.lnf_b));
}

Var lm_loss_var(Tape& t, const LmParams& p, Var phi_in, Var phi_out, const PackedBatch& batch) {
  Var h = lm_hidden(t, p, phi_in, batch);
  return t.cross_entropy(t.matmul(h, phi_out, true), batch.labels);
}

namespace {

void check_ids(std::span<const Sequence> seqs, std::size_t vocab) {
  for (const auto& s : seqs)
    for (auto id : s)
      require(id < vocab, ErrorCode::IdOutOfRange,
              "token id " + std::to_string(id) + " >= vocab size " + std::to_string(vocab));
}

}  // namespace

double lm_loss(const LmParams& p, std::span<const Sequence> seqs) {
  check_ids(seqs, p.cfg.vocab_size);
  PackedBatch batch = pack(seqs, p.cfg.max_seq_len);
  Tape t;
  return lm_loss_var(t, p, t.param(p.phi_in), t.param(p.phi_out), batch).value().item();
}

SubsetRemap remap_to_subset(std::span<const Sequence> seqs, std::span<const std::uint32_t> subset_ids) {
  std::unordered_map<std::uint32_t, std::uint32_t> pos;
  for (std::size_t i = 0; i < subset_ids.size(); ++i) pos.emplace(subset_ids[i], static_cast<std::uint32_t>(i));
  SubsetRemap out;
  for (const auto& s : seqs) {
    Sequence r;
    r.reserve(s.size());
    for (auto id : s) {
      auto it = pos.find(id);
      require(it != pos.end(), ErrorCode::TokenOutsideSubset, "token id " + std::to_string(id) + " not in subset");
      r.push_back(it->second);
    }
    out.seqs.push_back(std::move(r));
  }
  return out;
}

double lm_loss_subset(const LmParams& p, std::span<const Sequence> seqs, std::span<const std::uint32_t> subset_ids) {
  check_ids(seqs, p.cfg.vocab_size);
  std::vector<std::uint32_t> subset(subset_ids.begin(), subset_ids.end());
  for (auto id : subset)
    require(id < p.cfg.vocab_size, ErrorCode::IdOutOfRange, "subset id " + std::to_string(id) + " out of range");
  auto remapped = remap_to_subset(seqs, subset);
  PackedBatch batch = pack(remapped.seqs, p.cfg.max_seq_len);
  Tape t;
  Var in = t.gather(t.param(p.phi_in), subset);
  Var out = p.phi_out == p.phi_in ? in : t.gather(t.param(p.phi_out), subset);
  return lm_loss_var(t, p, in, out, batch).value().item();
}

double total_nll(const LmParams& p, const Tensor& phi_in, const Tensor& phi_out, std::span<const Sequence> seqs,
                 std::size_t* predicted) {
  require(phi_in.shape.size() == 2 && phi_in.shape[1] == p.cfg.d_model && phi_out.shape == phi_in.shape,
          ErrorCode::ShapeMismatch, "embedding matrices must be [V, d_model]");
  check_ids(seqs, phi_in.shape[0]);
  double total = 0;
  std::size_t count = 0;
  // chunks bound the logits buffer
  constexpr std::size_t kRowsPerChunk = 4096;
  std::size_t begin = 0;
  while (begin < seqs.size()) {
    std::size_t end = begin, rows = 0;
    while (end < seqs.size() && (rows == 0 || rows + seqs[end].size() <= kRowsPerChunk)) rows += seqs[end++].size();
    PackedBatch batch = pack(seqs.subspan(begin, end - begin), p.cfg.max_seq_len);
    std::size_t n = 0;
    for (auto l : batch.labels) n += l >= 0;
    if (n > 0) {
      Tape t;
      total += lm_loss_var(t, p, t.constant(phi_in), t.constant(phi_out), batch).value().item() * double(n);
      count += n;
    }
    begin = end;
  }
  if (predicted) *predicted = count;
  return total;
}

void save_lm(const LmParams& p, const tok::TokenizerSpec& tokenizer, const std::string& path) {
  json meta{{"kind", "toylm"}, {"config", json::parse(lm_config_to_json(p.cfg))},
            {"tokenizer", json::parse(tok::tokenizer_to_json(tokenizer))}};
  grad::save_checkpoint(grad::make_checkpoint(p.all(), meta.dump()), path);
}

LoadedLm load_lm(const std::string& path) {
  grad::Checkpoint ckpt = grad::load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, path + ": bad checkpoint metadata: " + e.what());
  }
  require(meta.value("kind", "") == "toylm", ErrorCode::InvalidFormat, path + " is not a toy LM checkpoint");
  LmConfig cfg = lm_config_from_json(meta.at("config").dump());
  LoadedLm out{init_lm(cfg, 0), tok::tokenizer_from_json(meta.at("tokenizer").dump())};
  grad::load_parameters(ckpt, out.params.all());
  return out;
}

}  // namespace zett::lm
