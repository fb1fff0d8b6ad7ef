#include "zett/hyper/hypernet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/common/json_fields.hpp"
#include "zett/convert/byte_level.hpp"
#include "zett/grad/checkpoint.hpp"
#include "zett/grad/optim.hpp"
#include "zett/lm/train.hpp"

namespace zett::hyper {

using nlohmann::json;

HypernetConfig HypernetConfig::for_lm(const lm::LmConfig& lm) {
  HypernetConfig c;
  c.d_model = lm.d_model;
  c.ffn_dim = 2 * lm.d_model;
  c.heads = std::max<std::size_t>(1, std::min<std::size_t>(lm.d_model / 64, 32));
  return c;
}

void HypernetConfig::validate() const {
  require(layers >= 1 && d_model > 0 && ffn_dim > 0 && heads > 0 && max_decomp_len > 0, ErrorCode::InvalidArgument,
          "hypernet dimensions must be positive");
  require(d_model % heads == 0, ErrorCode::InvalidArgument, "hypernet d_model must be divisible by heads");
  require(alpha >= 0 && std::isfinite(alpha), ErrorCode::InvalidArgument, "alpha must be >= 0");
  require(!lang_embedding || n_langs > 0, ErrorCode::InvalidArgument, "language embedding needs n_langs > 0");
}

std::string hypernet_config_to_json(const HypernetConfig& c) {
  return json{{"layers", c.layers},
              {"d_model", c.d_model},
              {"ffn_dim", c.ffn_dim},
              {"heads", c.heads},
              {"max_decomp_len", c.max_decomp_len},
              {"alpha", c.alpha},
              {"lang_embedding", c.lang_embedding},
              {"n_langs", c.n_langs}}
      .dump();
}

namespace {

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string(what) + ": " + e.what());
  }
}

}  // namespace

HypernetConfig hypernet_config_from_json(std::string_view text, const lm::LmConfig& lm) {
  json j = parse_json(text, "hypernet config");
  HypernetConfig c = HypernetConfig::for_lm(lm);
  JsonFields f(j, "hypernet");
  f.get("layers", c.layers).get("d_model", c.d_model).get("ffn_dim", c.ffn_dim).get("heads", c.heads);
  f.get("max_decomp_len", c.max_decomp_len).get("alpha", c.alpha).get("lang_embedding", c.lang_embedding);
  f.get("n_langs", c.n_langs);
  f.finish();
  require(c.d_model == lm.d_model, ErrorCode::InvalidArgument, "hypernet d_model must equal the LM's");
  c.validate();
  return c;
}

std::vector<Parameter> HypernetParams::all() const {
  std::vector<Parameter> out;
  if (extra) out.push_back(extra);
  out.push_back(pos);
  if (lang) out.push_back(lang);
  for (const auto& b : blocks)
    out.insert(out.end(), {b.wq, b.wk, b.wv, b.wo, b.bo, b.ln1_g, b.ln1_b, b.w1, b.b1, b.w2, b.b2, b.ln2_g, b.ln2_b});
  out.insert(out.end(), {in_w, in_b});
  if (out_w) out.insert(out.end(), {out_w, out_b});
  return out;
}

HypernetParams HypernetParams::clone() const {
  auto copy = [](const Parameter& p) { return p ? std::make_shared<grad::ParamData>(*p) : p; };
  HypernetParams c = *this;
  for (Parameter* p : {&c.extra, &c.pos, &c.lang, &c.in_w, &c.in_b, &c.out_w, &c.out_b}) *p = copy(*p);
  for (auto& b : c.blocks)
    for (Parameter* p : {&b.wq, &b.wk, &b.wv, &b.wo, &b.bo, &b.ln1_g, &b.ln1_b, &b.w1, &b.b1, &b.w2, &b.b2, &b.ln2_g,
                         &b.ln2_b})
      *p = copy(*p);
  return c;
}

namespace {

HypernetParams build_hypernet(const HypernetConfig& cfg, bool tied, std::size_t base_vocab, std::size_t n_extra,
                              double extra_std, Rng rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model, f = cfg.ffn_dim;
  const double s = 0.02;
  auto matrix = [&](std::string name, grad::Shape shape, double stddev) {
    return grad::make_param(std::move(name), Tensor::randn(std::move(shape), rng, stddev));
  };
  auto vec = [](std::string name, std::size_t n, double fill) {
    return grad::make_param(std::move(name), Tensor({n}, fill), false);
  };
  HypernetParams hp;
  hp.cfg = cfg;
  hp.tied = tied;
  hp.base_vocab = base_vocab;
  if (n_extra) hp.extra = matrix("hyper.extra", {n_extra, d}, extra_std);
  hp.pos = matrix("hyper.pos", {cfg.max_decomp_len + (cfg.lang_embedding ? 1 : 0), d}, s);
  if (cfg.lang_embedding) hp.lang = matrix("hyper.lang", {cfg.n_langs, d}, s);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::string pre = "hyper.block." + std::to_string(l) + ".";
    HyperBlock b;
    b.wq = matrix(pre + "wq", {d, d}, s);
    b.wk = matrix(pre + "wk", {d, d}, s);
    b.wv = matrix(pre + "wv", {d, d}, s);
    b.wo = matrix(pre + "wo", {d, d}, s);
    b.bo = vec(pre + "bo", d, 0.0);
    b.ln1_g = vec(pre + "ln1.g", d, 1.0);
    b.ln1_b = vec(pre + "ln1.b", d, 0.0);
    b.w1 = matrix(pre + "w1", {d, f}, s);
    b.b1 = vec(pre + "b1", f, 0.0);
    b.w2 = matrix(pre + "w2", {f, d}, s);
    b.b2 = vec(pre + "b2", d, 0.0);
    b.ln2_g = vec(pre + "ln2.g", d, 1.0);
    b.ln2_b = vec(pre + "ln2.b", d, 0.0);
    hp.blocks.push_back(std::move(b));
  }
  hp.in_w = matrix("hyper.in_w", {d, d}, s);
  hp.in_b = vec("hyper.in_b", d, 0.0);
  if (!tied) {
    hp.out_w = matrix("hyper.out_w", {d, d}, s);
    hp.out_b = vec("hyper.out_b", d, 0.0);
  }
  return hp;
}

double row_std(const Tensor& t) {
  double mean = 0, sq = 0;
  for (double v : t.data) mean += v;
  mean /= double(t.size());
  for (double v : t.data) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / double(t.size()));
}

}  // namespace

HypernetParams init_hypernet(const HypernetConfig& cfg, const lm::LmParams& lm, std::size_t n_extra,
                             std::uint64_t seed) {
  require(cfg.d_model == lm.cfg.d_model, ErrorCode::ShapeMismatch, "hypernet d_model must equal the LM's");
  return build_hypernet(cfg, lm.cfg.tied_embeddings, lm.cfg.vocab_size, n_extra, row_std(lm.phi_in->value),
                        Rng(seed).split("hypernet-init"));
}

std::vector<std::uint32_t> decompose(std::string_view token, const tok::TokenizerSpec& tok_a_bl, std::size_t max_len) {
  auto ids = tok::segment(token, tok_a_bl);
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

Decomposer::Decomposer(tok::TokenizerSpec tok_a_bl, std::size_t max_len) : tok_(std::move(tok_a_bl)), max_len_(max_len) {
  require(tok_.byte_level, ErrorCode::InvalidArgument, "decomposition needs a byte-level tokenizer");
  require(max_len_ >= 1, ErrorCode::InvalidArgument, "max_decomp_len must be >= 1");
}

const std::vector<std::uint32_t>& Decomposer::operator()(std::string_view token) {
  auto it = memo_.find(token);
  if (it == memo_.end()) it = memo_.emplace(std::string(token), decompose(token, tok_, max_len_)).first;
  return it->second;
}

Var source_table(Tape& t, const HypernetParams& hp, const Tensor& phi_a_in) {
  require(phi_a_in.shape.size() == 2 && phi_a_in.shape[0] == hp.base_vocab && phi_a_in.shape[1] == hp.cfg.d_model,
          ErrorCode::ShapeMismatch, "phi_a does not match the hypernet");
  Var base = t.constant(phi_a_in);
  return hp.extra ? t.concat_rows(base, t.param(hp.extra)) : base;
}

Prediction predict_var(Tape& t, const HypernetParams& hp, Var source,
                       const std::vector<const std::vector<std::uint32_t>*>& decomps, std::optional<std::size_t> lang) {
  const auto& cfg = hp.cfg;
  const std::size_t n_source = source.value().rows();
  const std::size_t slot = cfg.lang_embedding ? 1 : 0;
  if (lang) {
    require(cfg.lang_embedding, ErrorCode::InvalidArgument, "hypernet has no language embedding");
    require(*lang < cfg.n_langs, ErrorCode::IdOutOfRange, "language id out of range");
  }
  Var table = lang ? t.concat_rows(source, t.param(hp.lang)) : source;
  std::vector<std::uint32_t> ids, positions, pool;
  std::vector<grad::Segment> segs;
  for (const auto* d : decomps) {
    require(!d->empty() && d->size() <= cfg.max_decomp_len, ErrorCode::ShapeMismatch, "bad decomposition length");
    std::size_t start = ids.size();
    pool.push_back(static_cast<std::uint32_t>(start));
    if (lang) {
      ids.push_back(static_cast<std::uint32_t>(n_source + *lang));
      positions.push_back(0);
    }
    for (std::size_t i = 0; i < d->size(); ++i) {
      require((*d)[i] < n_source, ErrorCode::IdOutOfRange, "decomposition id outside phi_a and extra rows");
      ids.push_back((*d)[i]);
      positions.push_back(static_cast<std::uint32_t>(slot + i));
    }
    segs.push_back({start, ids.size() - start});
  }
  Var x = t.add(t.gather(table, ids), t.gather(t.param(hp.pos), positions));
  for (const auto& b : hp.blocks) {
    Var q = t.matmul(x, t.param(b.wq));
    Var k = t.matmul(x, t.param(b.wk));
    Var v = t.matmul(x, t.param(b.wv));
    Var a = t.attention(q, k, v, segs, cfg.heads, false);
    x = t.layer_norm(t.add(x, t.add_bias(t.matmul(a, t.param(b.wo)), t.param(b.bo))), t.param(b.ln1_g), t.param(b.ln1_b));
    Var f = t.gelu(t.add_bias(t.matmul(x, t.param(b.w1)), t.param(b.b1)));
    x = t.layer_norm(t.add(x, t.add_bias(t.matmul(f, t.param(b.w2)), t.param(b.b2))), t.param(b.ln2_g), t.param(b.ln2_b));
  }
  Var pooled = t.gather(x, pool);
  Var in = t.add_bias(t.matmul(pooled, t.param(hp.in_w)), t.param(hp.in_b));
  Var out = hp.tied ? in : t.add_bias(t.matmul(pooled, t.param(hp.out_w)), t.param(hp.out_b));
  return {in, out};
}

PredictedEmbeddings hypernet_forward(const std::vector<std::string>& tokens, const HypernetParams& hp,
                                     const lm::LmParams& lm, Decomposer& dec, std::optional<std::size_t> lang) {
  const std::size_t d = hp.cfg.d_model;
  PredictedEmbeddings out{Tensor({tokens.size(), d}), Tensor()};
  if (!hp.tied) out.out = Tensor({tokens.size(), d});
  constexpr std::size_t kChunk = 2048;
  for (std::size_t begin = 0; begin < tokens.size(); begin += kChunk) {
    std::size_t end = std::min(tokens.size(), begin + kChunk);
    std::vector<const std::vector<std::uint32_t>*> decomps;
    for (std::size_t i = begin; i < end; ++i) decomps.push_back(&dec(tokens[i]));
    Tape t;
    Prediction p = predict_var(t, hp, source_table(t, hp, lm.phi_in->value), decomps, lang);
    std::copy(p.in.value().data.begin(), p.in.value().data.end(), out.in.row(begin));
    if (!hp.tied) std::copy(p.out.value().data.begin(), p.out.value().data.end(), out.out.row(begin));
  }
  if (hp.tied) out.out = out.in;
  return out;
}

Var aux_loss_var(Tape& t, const Prediction& pred, const std::vector<std::uint32_t>& rows, const Tensor& target_in,
                 const Tensor& target_out, bool tied) {
  if (rows.empty()) return t.constant(Tensor::scalar(0.0));
  Var loss = t.mean(t.l2_distance(t.gather(pred.in, rows), t.constant(target_in)));
  if (!tied) loss = t.add(loss, t.mean(t.l2_distance(t.gather(pred.out, rows), t.constant(target_out))));
  return loss;
}

Var warmup_loss_var(Tape& t, const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec,
                    const std::vector<std::uint32_t>& ids) {
  const auto& va = dec.tokenizer().vocab();
  const std::size_t d = hp.cfg.d_model;
  std::vector<const std::vector<std::uint32_t>*> decomps;
  Tensor tin({ids.size(), d}), tout({ids.size(), d});
  std::vector<std::uint32_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < hp.base_vocab, ErrorCode::IdOutOfRange, "warmup id outside V_a");
    decomps.push_back(&dec(va.token(ids[i])));
    std::copy_n(lm.phi_in->value.row(ids[i]), d, tin.row(i));
    std::copy_n(lm.phi_out->value.row(ids[i]), d, tout.row(i));
    rows[i] = static_cast<std::uint32_t>(i);
  }
  Prediction p = predict_var(t, hp, source_table(t, hp, lm.phi_in->value), decomps);
  return aux_loss_var(t, p, rows, tin, tout, hp.tied);
}

double warmup_loss(const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec) {
  std::vector<std::uint32_t> ids(hp.base_vocab);
  std::iota(ids.begin(), ids.end(), 0u);
  Tape t;
  return warmup_loss_var(t, hp, lm, dec, ids).value().item();
}

LossParts final_loss_var(Tape& t, const HypernetParams& hp, const lm::LmParams& lm, Decomposer& dec,
                         const MainBatch& batch, double alpha) {
  std::vector<const std::vector<std::uint32_t>*> decomps;
  for (const auto& s : batch.subset_tokens) decomps.push_back(&dec(s));
  Prediction p = predict_var(t, hp, source_table(t, hp, lm.phi_in->value), decomps);
  lm::PackedBatch packed = lm::pack(batch.seqs, lm.cfg.max_seq_len);
  Var main = lm::lm_loss_var(t, lm, p.in, p.out, packed);
  LossParts parts{main, main.value().item(), 0.0};
  if (alpha != 0.0) {
    Var aux = aux_loss_var(t, p, batch.aux_rows, batch.aux_target_in, batch.aux_target_out, hp.tied);
    parts.aux = aux.value().item();
    parts.total = t.add(main, t.scale(aux, alpha));
  }
  return parts;
}

namespace {

// Distinct ids of `seqs` (ascending) then a uniform fill from the rest.
std::vector<std::uint32_t> choose_subset(const std::vector<lm::Sequence>& seqs, std::size_t vocab, std::size_t k, Rng& rng) {
  std::vector<char> used(vocab, 0);
  std::vector<std::uint32_t> subset;
  for (const auto& s : seqs)
    for (auto id : s) {
      require(id < vocab, ErrorCode::IdOutOfRange, "sequence id outside the target vocabulary");
      if (!used[id]) used[id] = 1, subset.push_back(id);
    }
  std::sort(subset.begin(), subset.end());
  std::vector<std::uint32_t> rest;
  for (std::uint32_t i = 0; i < vocab; ++i)
    if (!used[i]) rest.push_back(i);
  std::size_t fill = k > subset.size() ? std::min(k - subset.size(), rest.size()) : 0;
  for (std::size_t i = 0; i < fill; ++i) {
    std::swap(rest[i], rest[i + rng.below(rest.size() - i)]);
    subset.push_back(rest[i]);
  }
  return subset;
}

}  // namespace

MainBatch make_main_batch(const std::vector<lm::Sequence>& seqs, const tok::Vocabulary& vb, const lm::LmParams& lm,
                          const tok::Vocabulary& va, std::size_t subset_size, Rng& rng) {
  auto subset = choose_subset(seqs, vb.size(), subset_size, rng);
  MainBatch b;
  b.seqs = lm::remap_to_subset(seqs, subset).seqs;
  const std::size_t d = lm.cfg.d_model;
  std::vector<std::pair<std::uint32_t, tok::TokenId>> shared;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    b.subset_tokens.push_back(vb.token(subset[i]));
    if (auto a = va.find(b.subset_tokens.back()); a && *a < lm.cfg.vocab_size)
      shared.emplace_back(static_cast<std::uint32_t>(i), *a);
  }
  b.aux_target_in = Tensor({shared.size(), d});
  b.aux_target_out = Tensor({shared.size(), d});
  for (std::size_t i = 0; i < shared.size(); ++i) {
    b.aux_rows.push_back(shared[i].first);
    std::copy_n(lm.phi_in->value.row(shared[i].second), d, b.aux_target_in.row(i));
    std::copy_n(lm.phi_out->value.row(shared[i].second), d, b.aux_target_out.row(i));
  }
  return b;
}

HypernetTrainConfig HypernetTrainConfig::desk() {
  HypernetTrainConfig c;
  c.warmup_steps = 300;
  c.steps = 3000;
  c.warmup_lr = 1e-3;
  c.peak_lr = 5e-4;
  c.final_lr = 5e-5;
  c.lr_warmup_steps = 100;
  c.max_grad_norm = 1.0;
  c.subset_size = 1024;
  return c;
}

std::string hypernet_train_config_to_json(const HypernetTrainConfig& c) {
  return json{{"warmup_steps", c.warmup_steps}, {"steps", c.steps},
              {"warmup_lr", c.warmup_lr},       {"peak_lr", c.peak_lr},
              {"final_lr", c.final_lr},         {"lr_warmup_steps", c.lr_warmup_steps},
              {"max_grad_norm", c.max_grad_norm}, {"weight_decay", c.weight_decay},
              {"warmup_batch", c.warmup_batch}, {"subset_size", c.subset_size},
              {"seed", c.seed}}
      .dump();
}

HypernetTrainConfig hypernet_train_config_from_json(std::string_view text) {
  json j = parse_json(text, "hypernet training config");
  HypernetTrainConfig c;
  JsonFields f(j, "hypernet_train");
  f.get("warmup_steps", c.warmup_steps).get("steps", c.steps).get("warmup_lr", c.warmup_lr);
  f.get("peak_lr", c.peak_lr).get("final_lr", c.final_lr).get("lr_warmup_steps", c.lr_warmup_steps);
  f.get("max_grad_norm", c.max_grad_norm).get("weight_decay", c.weight_decay).get("warmup_batch", c.warmup_batch);
  f.get("subset_size", c.subset_size).get("seed", c.seed);
  f.finish();
  return c;
}

namespace {

tok::TokenizerSpec byte_level_of(const tok::TokenizerSpec& t) {
  return t.byte_level ? t : convert::to_byte_level(t).tokenizer;
}

void reset_moments(const std::vector<Parameter>& params) {
  for (const auto& p : params) p->adam_m = p->adam_v = Tensor();
}

void check_finite(double v, const char* what, std::size_t step) {
  require(std::isfinite(v), ErrorCode::NumericFailure, std::string(what) + " diverged at step " + std::to_string(step));
}

}  // namespace

HypernetParams train_hypernetwork(const std::vector<std::string>& docs, const lm::LmParams& lm_in,
                                  const tok::TokenizerSpec& tok_a, const HypernetConfig& hcfg,
                                  const sampler::SamplerConfig& scfg, const HypernetTrainConfig& tcfg,
                                  const HyperCallback& on_step) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "hypernet training needs a corpus");
  require(tok_a.vocab().size() == lm_in.cfg.vocab_size, ErrorCode::DimensionMismatch, "tokenizer/LM vocab mismatch");
  lm::LmParams lm = lm_in.clone();
  lm.set_psi_trainable(false);
  for (const auto& p : lm.embeddings()) p->trainable = false;

  auto conv = tok_a.byte_level ? convert::ByteLevelConversion{tok_a, 0} : convert::to_byte_level(tok_a);
  Decomposer dec(conv.tokenizer, hcfg.max_decomp_len);
  HypernetParams hp = init_hypernet(hcfg, lm, conv.extra_tokens, tcfg.seed);
  auto params = hp.all();
  Rng rng = Rng(tcfg.seed).split("hypernet-train");

  {
    grad::AdamW opt({0.9, 0.95, 1e-8, tcfg.weight_decay});
    std::size_t ramp = std::min(tcfg.lr_warmup_steps, tcfg.warmup_steps / 3);
    grad::LrSchedule sched{ramp, tcfg.warmup_steps, tcfg.warmup_lr, tcfg.warmup_lr};
    std::vector<std::uint32_t> all_ids(lm.cfg.vocab_size);
    std::iota(all_ids.begin(), all_ids.end(), 0u);
    for (std::size_t step = 0; step < tcfg.warmup_steps; ++step) {
      std::vector<std::uint32_t> ids = all_ids;
      if (ids.size() > tcfg.warmup_batch) {
        for (std::size_t i = 0; i < tcfg.warmup_batch; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
        ids.resize(tcfg.warmup_batch);
      }
      grad::zero_grads(params);
      Tape t;
      Var loss = warmup_loss_var(t, hp, lm, dec, ids);
      t.backward(loss);
      check_finite(loss.value().item(), "warmup loss", step);
      grad::clip_global_norm(params, tcfg.max_grad_norm);
      opt.step(params, sched(step + 1));
      if (on_step) on_step({HyperEvent::Warmup, step, loss.value().item(), 0.0});
    }
  }

  if (tcfg.steps > 0) {
    reset_moments(params);
    grad::AdamW opt({0.9, 0.95, 1e-8, tcfg.weight_decay});
    grad::LrSchedule sched{tcfg.lr_warmup_steps, tcfg.steps, tcfg.peak_lr, tcfg.final_lr};
    sampler::SamplerConfig sc = scfg;
    sc.pretok = tok_a.pretok;
    sampler::TrainingStream stream(docs, sc);
    for (std::size_t step = 0; step < tcfg.steps; ++step) {
      auto item = stream.next();
      auto seqs = lm::encode_windows(item.batch, item.tokenizer, lm.cfg.max_seq_len);
      if (seqs.empty()) continue;
      MainBatch batch = make_main_batch(seqs, item.tokenizer.vocab(), lm, tok_a.vocab(), tcfg.subset_size, rng);
      grad::zero_grads(params);
      Tape t;
      LossParts parts = final_loss_var(t, hp, lm, dec, batch, hcfg.alpha);
      t.backward(parts.total);
      check_finite(parts.total.value().item(), "hypernet loss", step);
      grad::clip_global_norm(params, tcfg.max_grad_norm);
      opt.step(params, sched(step + 1));
      if (on_step) on_step({HyperEvent::Main, step, parts.main, parts.aux});
    }
  }
  return hp;
}

ZettResult zett_transfer(const lm::LmParams& lm, const HypernetParams& hp, const tok::TokenizerSpec& tok_a,
                         const tok::TokenizerSpec& new_tok) {
  require(tok_a.vocab().size() == hp.base_vocab, ErrorCode::DimensionMismatch, "tokenizer does not match the hypernet");
  auto conv = tok_a.byte_level ? convert::ByteLevelConversion{tok_a, 0} : convert::to_byte_level(tok_a);
  require(conv.extra_tokens == hp.n_extra(), ErrorCode::ShapeMismatch, "extra byte rows do not match the tokenizer");
  Decomposer dec(conv.tokenizer, hp.cfg.max_decomp_len);
  ZettResult r{{}, byte_level_of(new_tok)};
  r.embeddings = hypernet_forward(r.tokenizer.vocab().tokens(), hp, lm, dec);
  return r;
}

ContinuedResult continued_training(const lm::LmParams& lm_in, const HypernetParams& hp_in,
                                   const tok::TokenizerSpec& tok_a, const tok::TokenizerSpec& target_tok,
                                   const std::vector<std::string>& docs, const ContinuedConfig& cfg,
                                   const HyperCallback& on_step) {
  ZettResult zero = zett_transfer(lm_in, hp_in, tok_a, target_tok);
  ContinuedResult r{lm_in.clone(), hp_in.clone(), zero.tokenizer};
  if (cfg.steps == 0) return r;
  require(!docs.empty(), ErrorCode::EmptyCorpus, "continued training needs a corpus");
  r.lm.set_psi_trainable(true);
  for (const auto& p : r.lm.embeddings()) p->trainable = false;
  auto conv = tok_a.byte_level ? convert::ByteLevelConversion{tok_a, 0} : convert::to_byte_level(tok_a);
  Decomposer dec(conv.tokenizer, r.hypernet.cfg.max_decomp_len);

  std::vector<Parameter> params = r.hypernet.all();
  for (const auto& p : r.lm.psi()) params.push_back(p);
  grad::AdamW opt;
  Rng rng = Rng(cfg.seed).split("continued");
  lm::WindowSampler windows(lm::encode_windows(docs, r.tokenizer, r.lm.cfg.max_seq_len), rng.split("windows"));
  const std::size_t d = r.lm.cfg.d_model;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto seqs = windows.next(cfg.tokens_per_batch);
    auto subset = choose_subset(seqs, r.tokenizer.vocab().size(), cfg.subset_size, rng);
    MainBatch batch;
    batch.seqs = lm::remap_to_subset(seqs, subset).seqs;
    batch.aux_target_in = Tensor({subset.size(), d});
    batch.aux_target_out = Tensor({subset.size(), d});
    for (std::size_t i = 0; i < subset.size(); ++i) {
      batch.subset_tokens.push_back(r.tokenizer.vocab().token(subset[i]));
      batch.aux_rows.push_back(static_cast<std::uint32_t>(i));
      std::copy_n(zero.embeddings.in.row(subset[i]), d, batch.aux_target_in.row(i));
      std::copy_n(zero.embeddings.out.row(subset[i]), d, batch.aux_target_out.row(i));
    }
    grad::zero_grads(params);
    Tape t;
    LossParts parts = final_loss_var(t, r.hypernet, r.lm, dec, batch, cfg.alpha);
    t.backward(parts.total);
    check_finite(parts.total.value().item(), "continued-training loss", step);
    grad::clip_global_norm(params, cfg.max_grad_norm);
    opt.step(params, cfg.lr);
    if (on_step) on_step({HyperEvent::Main, step, parts.main, parts.aux});
  }
  return r;
}

void save_hypernet(const HypernetParams& hp, const std::string& path) {
  json meta{{"kind", "hypernet"},
            {"config", json::parse(hypernet_config_to_json(hp.cfg))},
            {"tied", hp.tied},
            {"base_vocab", hp.base_vocab},
            {"n_extra", hp.n_extra()}};
  grad::save_checkpoint(grad::make_checkpoint(hp.all(), meta.dump()), path);
}

HypernetParams load_hypernet(const std::string& path) {
  grad::Checkpoint ckpt = grad::load_checkpoint(path);
  json meta = parse_json(ckpt.metadata, "hypernet checkpoint metadata");
  require(meta.value("kind", "") == "hypernet", ErrorCode::InvalidFormat, path + " is not a hypernet checkpoint");
  HypernetConfig cfg;
  {
    const json& c = meta.at("config");
    JsonFields f(c, "hypernet");
    f.get("layers", cfg.layers).get("d_model", cfg.d_model).get("ffn_dim", cfg.ffn_dim).get("heads", cfg.heads);
    f.get("max_decomp_len", cfg.max_decomp_len).get("alpha", cfg.alpha).get("lang_embedding", cfg.lang_embedding);
    f.get("n_langs", cfg.n_langs);
    f.finish();
  }
  HypernetParams hp = build_hypernet(cfg, meta.at("tied").get<bool>(), meta.at("base_vocab").get<std::size_t>(),
                                     meta.at("n_extra").get<std::size_t>(), 1.0, Rng(0));
  grad::load_parameters(ckpt, hp.all());
  return hp;
}

}  // namespace zett::hyper
