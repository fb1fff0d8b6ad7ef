#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "zett/cli/run_config.hpp"
#include "zett/common/corpus.hpp"
#include "zett/common/error.hpp"
#include "zett/convert/byte_level.hpp"
#include "zett/convert/preservation.hpp"
#include "zett/convert/unigramify.hpp"
#include "zett/eval/metrics.hpp"
#include "zett/grad/checkpoint.hpp"
#include "zett/hyper/hypernet.hpp"
#include "zett/lm/train.hpp"
#include "zett/tok/bpe_trainer.hpp"
#include "zett/tok/io.hpp"
#include "zett/transfer/embeddings.hpp"

using namespace zett;
using nlohmann::json;
using grad::Tensor;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

cli::RunConfig load_config(const Common& c) {
  cli::RunConfig cfg = c.config.empty() ? cli::run_config_from_json("{}") : cli::run_config_from_json(tok::read_file(c.config));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.lm_train.seed = cfg.hypernet_train.seed = cfg.sampler.seed = cfg.continued.seed = *c.seed;
  }
  return cfg;
}

// `<output>.manifest.json`: everything that determines the output. Inputs are
// keyed by file name so a run in another directory yields the same manifest.
void write_manifest(const std::string& output, const std::string& command, const cli::RunConfig& cfg,
                    const json& args, const std::vector<std::string>& inputs) {
  json in = json::object();
  for (const auto& path : inputs)
    if (!path.empty()) in[std::filesystem::path(path).filename().string()] = eval::content_hash(tok::read_file(path));
  json m{{"command", command},
         {"version", kVersion},
         {"seed", cfg.seed},
         {"config", json::parse(cli::run_config_to_json(cfg))},
         {"args", args},
         {"inputs", in}};
  m["config_hash"] = eval::content_hash(m.dump());
  tok::write_file(output + ".manifest.json", m.dump(2) + "\n");
}

void print_value(double v) { std::cout << json(v).dump() << "\n"; }

std::vector<std::string> docs_of(const std::string& path) { return load_corpus(path); }

std::vector<transfer::EmbeddingMatrix> blocks_of(const Tensor& in, const Tensor& out, bool tied) {
  if (tied) return {{in, transfer::EmbeddingRole::Tied}};
  return {{in, transfer::EmbeddingRole::Input}, {out, transfer::EmbeddingRole::Output}};
}

std::pair<Tensor, Tensor> embeddings_from_file(const std::string& path) {
  auto blocks = transfer::load_embeddings(path);
  if (blocks.size() == 1) return {blocks[0].values, blocks[0].values};
  return {blocks[0].values, blocks[1].values};
}

int run(int argc, char** argv) {
  CLI::App app{"Zero-shot tokenizer transfer toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Run configuration (JSON)");
  app.add_option("--seed", common.seed, "Global seed (overrides the config)");

  // convert-byte-level
  auto* cbl = app.add_subcommand("convert-byte-level", "Make a tokenizer accept every byte string");
  std::string cbl_in, cbl_out;
  cbl->add_option("--tokenizer", cbl_in)->required();
  cbl->add_option("--out", cbl_out)->required();

  // unigramify
  auto* uni = app.add_subcommand("unigramify", "Approximate a tokenizer with a UnigramLM");
  std::string uni_in, uni_corpus, uni_out, uni_backend = "auto";
  std::size_t uni_top = 1'000'000;
  uni->add_option("--tokenizer", uni_in)->required();
  uni->add_option("--corpus", uni_corpus)->required();
  uni->add_option("--out", uni_out)->required();
  uni->add_option("--top-n", uni_top);
  uni->add_option("--backend", uni_backend)->check(CLI::IsMember({"auto", "simplex", "subgradient"}));

  // sample
  auto* smp = app.add_subcommand("sample", "Sample a UnigramLM tokenizer from corpus substrings");
  std::string smp_corpus, smp_out;
  std::optional<std::size_t> smp_k, smp_len;
  std::optional<double> smp_mu, smp_sigma;
  bool smp_log = false;
  smp->add_option("--corpus", smp_corpus)->required();
  smp->add_option("--out", smp_out)->required();
  smp->add_option("--k", smp_k);
  smp->add_option("--mu", smp_mu);
  smp->add_option("--sigma", smp_sigma);
  smp->add_option("--max-len", smp_len);
  smp->add_flag("--log-scores", smp_log);

  // transfer
  auto* trf = app.add_subcommand("transfer", "Initialize embeddings for a new tokenizer");
  std::string trf_method, trf_lm, trf_tok, trf_hyper, trf_corpus, trf_aux, trf_out, trf_out_tok;
  trf->add_option("--method", trf_method)->required()->check(CLI::IsMember({"lexical", "fvt", "focus", "zett"}));
  trf->add_option("--lm", trf_lm)->required();
  trf->add_option("--tokenizer", trf_tok)->required();
  trf->add_option("--hypernet", trf_hyper);
  trf->add_option("--corpus", trf_corpus, "Corpus for FOCUS auxiliary embeddings");
  trf->add_option("--aux", trf_aux, "Auxiliary embeddings (text) for FOCUS");
  trf->add_option("--out", trf_out)->required();
  trf->add_option("--out-tokenizer", trf_out_tok, "Tokenizer matching the output rows");

  // train-lm
  auto* tlm = app.add_subcommand("train-lm", "Train the toy language model");
  std::string tlm_corpus, tlm_tok, tlm_out;
  std::optional<std::size_t> tlm_vocab, tlm_steps;
  tlm->add_option("--corpus", tlm_corpus);
  tlm->add_option("--tokenizer", tlm_tok);
  tlm->add_option("--vocab-size", tlm_vocab, "Train a byte-level BPE tokenizer of this size instead");
  tlm->add_option("--steps", tlm_steps);
  tlm->add_option("--out", tlm_out)->required();

  // train-hypernet
  auto* thn = app.add_subcommand("train-hypernet", "Train a hypernetwork for an LM");
  std::string thn_lm, thn_corpus, thn_out;
  bool thn_desk = false;
  thn->add_option("--lm", thn_lm)->required();
  thn->add_option("--corpus", thn_corpus);
  thn->add_option("--out", thn_out)->required();
  thn->add_flag("--desk", thn_desk, "Start from the small-model training defaults");

  // continue-train
  auto* ctn = app.add_subcommand("continue-train", "Continue training from zero-shot on one tokenizer");
  std::string ctn_lm, ctn_hyper, ctn_tok, ctn_corpus, ctn_out_lm, ctn_out_hyper;
  std::optional<std::size_t> ctn_steps;
  std::optional<double> ctn_lr;
  ctn->add_option("--lm", ctn_lm)->required();
  ctn->add_option("--hypernet", ctn_hyper)->required();
  ctn->add_option("--tokenizer", ctn_tok)->required();
  ctn->add_option("--corpus", ctn_corpus);
  ctn->add_option("--steps", ctn_steps);
  ctn->add_option("--lr", ctn_lr);
  ctn->add_option("--out-lm", ctn_out_lm)->required();
  ctn->add_option("--out-hypernet", ctn_out_hyper);

  // merge
  auto* mrg = app.add_subcommand("merge", "Task arithmetic: target + lambda * (ft - base)");
  std::string mrg_base, mrg_ft, mrg_target, mrg_out;
  double mrg_lambda = 0.5;
  mrg->add_option("--base", mrg_base)->required();
  mrg->add_option("--ft", mrg_ft)->required();
  mrg->add_option("--target", mrg_target)->required();
  mrg->add_option("--lambda", mrg_lambda);
  mrg->add_option("--out", mrg_out)->required();

  // eval
  auto* evl = app.add_subcommand("eval", "Compute a metric");
  std::string evl_metric, evl_lm, evl_tok, evl_tok_b, evl_emb, evl_corpus, evl_json;
  std::size_t evl_n = 100000;
  evl->add_option("--metric", evl_metric)->required()->check(CLI::IsMember({"bpc", "bpb", "dlen", "preserve", "overlap"}));
  evl->add_option("--lm", evl_lm);
  evl->add_option("--tokenizer", evl_tok);
  evl->add_option("--tokenizer-b", evl_tok_b);
  evl->add_option("--embeddings", evl_emb);
  evl->add_option("--corpus", evl_corpus);
  evl->add_option("--samples", evl_n, "Pretokens sampled for preserve");
  evl->add_option("--json", evl_json);

  // flops
  auto* flp = app.add_subcommand("flops", "Analytic parameter and FLOPs counts");
  std::string flp_preset = "gpt2";
  std::vector<double> flp_batch;
  flp->add_option("--preset", flp_preset)->check(CLI::IsMember({"gpt2", "config"}));
  flp->add_option("--batch", flp_batch, "n s k t: batch FLOPs with the computed per-token values")->expected(4);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  cli::RunConfig cfg = load_config(common);

  if (*cbl) {
    auto conv = convert::to_byte_level(tok::load_tokenizer(cbl_in));
    tok::save_tokenizer(conv.tokenizer, cbl_out);
    write_manifest(cbl_out, "convert-byte-level", cfg, {{"tokenizer", cbl_in}}, {cbl_in});
    std::cout << json{{"extra_tokens", conv.extra_tokens}}.dump() << "\n";
  } else if (*uni) {
    convert::UnigramifyOptions opts;
    opts.top_n = uni_top;
    opts.lp.backend = uni_backend == "simplex"       ? convert::LpBackend::Simplex
                      : uni_backend == "subgradient" ? convert::LpBackend::Subgradient
                                                     : convert::LpBackend::Auto;
    auto r = convert::unigramify(tok::load_tokenizer(uni_in), docs_of(uni_corpus), opts);
    tok::save_tokenizer(r.tokenizer, uni_out);
    write_manifest(uni_out, "unigramify", cfg, {{"top_n", uni_top}, {"backend", uni_backend}}, {uni_in, uni_corpus});
    std::cout << convert::report_json(r) << "\n";
  } else if (*smp) {
    auto docs = docs_of(smp_corpus);
    sampler::SamplerConfig sc = cfg.sampler;
    if (smp_k) sc.vocab_size = *smp_k;
    if (smp_mu) sc.mu = *smp_mu;
    if (smp_sigma) sc.sigma = *smp_sigma;
    if (smp_len) sc.max_token_len = *smp_len;
    if (smp_log) sc.log_scores = true;
    sc.pool_size = sc.batch_size = docs.size();
    sampler::SamplerState state(sc);
    state.advance(docs);
    auto spec = tok::make_unigram_tokenizer(state.sample_tokenizer(), sc.pretok);
    tok::save_tokenizer(spec, smp_out);
    cfg.sampler = sc;
    write_manifest(smp_out, "sample", cfg, json::object(), {smp_corpus});
  } else if (*trf) {
    auto loaded = lm::load_lm(trf_lm);
    const auto& model = loaded.params;
    auto target = tok::load_tokenizer(trf_tok);
    Rng rng = Rng(cfg.seed).split("transfer");
    Tensor in, out;
    tok::TokenizerSpec out_tok = target;
    auto heuristic = [&](const Tensor& phi) -> Tensor {
      if (trf_method == "lexical") return transfer::transfer_lexical(phi, loaded.tokenizer.vocab(), target.vocab(), rng);
      if (trf_method == "fvt") return transfer::transfer_fvt(phi, loaded.tokenizer, target.vocab());
      require(!trf_aux.empty() || !trf_corpus.empty(), ErrorCode::InvalidArgument, "focus needs --aux or --corpus");
      auto aux = trf_aux.empty() ? transfer::train_aux_embeddings(docs_of(trf_corpus), target, model.cfg.d_model)
                                 : transfer::load_aux_text(trf_aux);
      return transfer::transfer_focus(phi, loaded.tokenizer, target, aux);
    };
    if (trf_method == "zett") {
      require(!trf_hyper.empty(), ErrorCode::InvalidArgument, "zett transfer needs --hypernet");
      auto z = hyper::zett_transfer(model, hyper::load_hypernet(trf_hyper), loaded.tokenizer, target);
      in = z.embeddings.in, out = z.embeddings.out, out_tok = z.tokenizer;
    } else {
      in = heuristic(model.phi_in->value);
      out = model.cfg.tied_embeddings ? in : heuristic(model.phi_out->value);
    }
    transfer::save_embeddings(blocks_of(in, out, model.cfg.tied_embeddings), trf_out);
    if (!trf_out_tok.empty()) tok::save_tokenizer(out_tok, trf_out_tok);
    write_manifest(trf_out, "transfer", cfg, {{"method", trf_method}}, {trf_lm, trf_tok, trf_hyper, trf_corpus, trf_aux});
  } else if (*tlm) {
    std::string corpus = tlm_corpus.empty() ? cfg.corpus : tlm_corpus;
    require(!corpus.empty(), ErrorCode::InvalidArgument, "train-lm needs --corpus");
    auto docs = docs_of(corpus);
    std::string tok_path = tlm_tok.empty() ? cfg.tokenizer : tlm_tok;
    tok::TokenizerSpec tk;
    if (tlm_vocab) {
      tok::PretokenizerConfig pc;
      tk = tok::make_bpe_tokenizer(tok::train_bpe(tok::count_pretokens(docs, pc), *tlm_vocab, true), pc, true);
    } else {
      require(!tok_path.empty(), ErrorCode::InvalidArgument, "train-lm needs --tokenizer or --vocab-size");
      tk = tok::load_tokenizer(tok_path);
    }
    cfg.lm.vocab_size = tk.vocab().size();
    if (tlm_steps) cfg.lm_train.steps = *tlm_steps;
    auto params = lm::train_lm(docs, tk, cfg.lm, cfg.lm_train, [](const lm::TrainEvent& e) {
      if ((e.step + 1) % 100 == 0) std::cerr << "step " << e.step + 1 << " loss " << e.loss << "\n";
    });
    lm::save_lm(params, tk, tlm_out);
    write_manifest(tlm_out, "train-lm", cfg, {{"vocab_size", tlm_vocab ? json(*tlm_vocab) : json()}},
                   {corpus, tlm_vocab ? std::string() : tok_path});
  } else if (*thn) {
    std::string corpus = thn_corpus.empty() ? cfg.corpus : thn_corpus;
    require(!corpus.empty(), ErrorCode::InvalidArgument, "train-hypernet needs --corpus");
    auto loaded = lm::load_lm(thn_lm);
    if (thn_desk && common.config.empty()) {
      auto seed = cfg.hypernet_train.seed;
      cfg.hypernet_train = hyper::HypernetTrainConfig::desk();
      cfg.hypernet_train.seed = seed;
    }
    auto hp = hyper::train_hypernetwork(docs_of(corpus), loaded.params, loaded.tokenizer,
                                        cfg.hypernet_for(loaded.params.cfg), cfg.sampler, cfg.hypernet_train,
                                        [](const hyper::HyperEvent& e) {
                                          if ((e.step + 1) % 100 == 0)
                                            std::cerr << (e.stage == hyper::HyperEvent::Warmup ? "warmup " : "main ")
                                                      << e.step + 1 << " loss " << e.loss << "\n";
                                        });
    hyper::save_hypernet(hp, thn_out);
    write_manifest(thn_out, "train-hypernet", cfg, {{"desk", thn_desk}}, {thn_lm, corpus});
  } else if (*ctn) {
    std::string corpus = ctn_corpus.empty() ? cfg.corpus : ctn_corpus;
    require(!corpus.empty(), ErrorCode::InvalidArgument, "continue-train needs --corpus");
    auto loaded = lm::load_lm(ctn_lm);
    hyper::ContinuedConfig cc = cfg.continued;
    if (ctn_steps) cc.steps = *ctn_steps;
    if (ctn_lr) cc.lr = *ctn_lr;
    auto target = tok::load_tokenizer(ctn_tok);
    auto r = hyper::continued_training(loaded.params, hyper::load_hypernet(ctn_hyper), loaded.tokenizer, target,
                                       docs_of(corpus), cc);
    auto z = hyper::zett_transfer(r.lm, r.hypernet, loaded.tokenizer, target);
    lm::save_lm(lm::with_embeddings(r.lm, z.embeddings.in, z.embeddings.out), z.tokenizer, ctn_out_lm);
    if (!ctn_out_hyper.empty()) hyper::save_hypernet(r.hypernet, ctn_out_hyper);
    cfg.continued = cc;
    write_manifest(ctn_out_lm, "continue-train", cfg, json::object(), {ctn_lm, ctn_hyper, ctn_tok, corpus});
  } else if (*mrg) {
    auto base = grad::load_checkpoint(mrg_base), ft = grad::load_checkpoint(mrg_ft), target = grad::load_checkpoint(mrg_target);
    grad::Checkpoint merged{target.metadata, transfer::task_arithmetic(base.tensors, ft.tensors, target.tensors, mrg_lambda)};
    grad::save_checkpoint(merged, mrg_out);
    write_manifest(mrg_out, "merge", cfg, {{"lambda", mrg_lambda}}, {mrg_base, mrg_ft, mrg_target});
  } else if (*evl) {
    require(!evl_corpus.empty() || evl_metric == "overlap", ErrorCode::InvalidArgument, "eval needs --corpus");
    std::vector<std::string> docs = evl_corpus.empty() ? std::vector<std::string>{} : docs_of(evl_corpus);
    eval::EvalReport report;
    report.metric = evl_metric;
    report.corpus_id = evl_corpus.empty() ? "" : eval::corpus_id(docs);
    report.config_hash = cli::config_hash(cfg);
    if (evl_metric == "bpc" || evl_metric == "bpb") {
      require(!evl_lm.empty(), ErrorCode::InvalidArgument, "bpc/bpb need --lm");
      auto loaded = lm::load_lm(evl_lm);
      auto tk = evl_tok.empty() ? loaded.tokenizer : tok::load_tokenizer(evl_tok);
      Tensor in = loaded.params.phi_in->value, out = loaded.params.phi_out->value;
      if (!evl_emb.empty()) std::tie(in, out) = embeddings_from_file(evl_emb);
      require(in.rows() == tk.vocab().size(), ErrorCode::DimensionMismatch, "embedding rows do not match the tokenizer");
      auto r = eval::evaluate_bpc(loaded.params, in, out, tk, docs);
      report.value = evl_metric == "bpc" ? r.bits_per_char() : r.bits_per_byte();
      report.tokenizer_ids = {eval::tokenizer_id(tk)};
    } else {
      require(!evl_tok.empty() && !evl_tok_b.empty(), ErrorCode::InvalidArgument,
              evl_metric + " needs --tokenizer and --tokenizer-b");
      auto a = tok::load_tokenizer(evl_tok), b = tok::load_tokenizer(evl_tok_b);
      report.tokenizer_ids = {eval::tokenizer_id(a), eval::tokenizer_id(b)};
      if (evl_metric == "dlen") report.value = eval::delta_length(a, b, docs);
      if (evl_metric == "preserve") report.value = convert::preservation_rate(a, b, docs, evl_n, cfg.seed);
      if (evl_metric == "overlap") report.value = transfer::vocab_overlap(a.vocab(), b.vocab());
    }
    require(std::isfinite(report.value), ErrorCode::NumericFailure, "metric is not finite");
    print_value(report.value);
    if (!evl_json.empty()) {
      tok::write_file(evl_json, report.to_json() + "\n");
      write_manifest(evl_json, "eval", cfg, {{"metric", evl_metric}}, {evl_lm, evl_tok, evl_tok_b, evl_emb, evl_corpus});
    }
  } else if (*flp) {
    lm::LmConfig lc = cfg.lm;
    if (flp_preset == "gpt2") {
      lc.layers = 12, lc.d_model = 768, lc.heads = 12, lc.ffn_dim = 3072, lc.max_seq_len = 1024, lc.vocab_size = 50257;
    }
    auto main = eval::flops_estimate(lc);
    auto hyp = eval::flops_estimate(cfg.hypernet_for(lc), lc.vocab_size);
    json out{{"main", {{"params", main.params}, {"flops_per_token", main.flops_per_token}}},
             {"hypernet", {{"params", hyp.params}, {"flops_per_token", hyp.flops_per_token}}}};
    if (flp_batch.size() == 4)
      out["batch_flops"] = eval::batch_flops(flp_batch[0], flp_batch[1], main.flops_per_token, flp_batch[2],
                                             flp_batch[3], hyp.flops_per_token);
    std::cout << out.dump(2) << "\n";
  }
  return kOk;
}

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
      return kUsage;
    case ErrorCode::NumericFailure:
      return kNumeric;
    default:
      return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
