#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "support.hpp"
#include "zett/common/corpus.hpp"
#include "zett/common/error.hpp"
#include "zett/convert/byte_level.hpp"
#include "zett/hyper/hypernet.hpp"
#include "zett/tok/bpe_trainer.hpp"

using namespace zett;
using namespace zett::hyper;

namespace {

lm::LmConfig tiny_lm_config(std::size_t vocab, bool tied) {
  lm::LmConfig c;
  c.layers = 1;
  c.d_model = 16;
  c.heads = 2;
  c.ffn_dim = 24;
  c.max_seq_len = 24;
  c.vocab_size = vocab;
  c.tied_embeddings = tied;
  return c;
}

HypernetConfig tiny_hyper_config(const lm::LmConfig& lm) {
  HypernetConfig h = HypernetConfig::for_lm(lm);
  h.layers = 2;
  h.heads = 2;
  h.ffn_dim = 20;
  return h;
}

// Byte-level unigram tokenizer: all 256 bytes plus `extra` multi-byte tokens.
tok::TokenizerSpec byte_unigram(std::initializer_list<const char*> extra, Rng& rng) {
  std::vector<std::string> tokens;
  for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
  for (const char* t : extra) tokens.emplace_back(t);
  std::vector<double> scores;
  for (std::size_t i = 0; i < tokens.size(); ++i) scores.push_back(i < 256 ? -8.0 : -1.0 - rng.uniform());
  auto spec = tok::make_unigram_tokenizer(tok::UnigramModel(tok::Vocabulary(std::move(tokens)), std::move(scores)));
  spec.byte_level = true;
  return spec;
}

tok::TokenizerSpec small_bpe(const std::vector<std::string>& docs, std::size_t size) {
  tok::PretokenizerConfig pc;
  return tok::make_bpe_tokenizer(tok::train_bpe(tok::count_pretokens(docs, pc), size, true), pc, true);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

double naive_mean_l2(const Tensor& pred, const std::vector<std::uint32_t>& rows, const Tensor& target) {
  double total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double sq = 0;
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      double diff = pred.at(rows[i], c) - target.at(i, c);
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return total / double(rows.size());
}

struct Fixture {
  tok::TokenizerSpec tok_a;
  lm::LmParams lm;
  HypernetParams hp;
  Decomposer dec;
};

Fixture make_fixture(bool tied, std::uint64_t seed) {
  Rng rng(seed);
  auto tok_a = byte_unigram({"ab", "abc", "the", " the", "ing", "er"}, rng);
  lm::LmParams lm = lm::init_lm(tiny_lm_config(tok_a.vocab().size(), tied), seed);
  HypernetParams hp = init_hypernet(tiny_hyper_config(lm.cfg), lm, 0, seed + 1);
  Decomposer dec(tok_a, hp.cfg.max_decomp_len);
  return {tok_a, std::move(lm), std::move(hp), std::move(dec)};
}

}  // namespace

TEST_CASE("decomposition under the source tokenizer") {
  Rng rng(1);
  auto tok_a = byte_unigram({"ab", "abc"}, rng);
  auto id = [&](const char* s) { return *tok_a.vocab().find(s); };
  CHECK(decompose("abcab", tok_a, 7) == std::vector<std::uint32_t>{id("abc"), id("ab")});
  CHECK(decompose("x", tok_a, 7) == std::vector<std::uint32_t>{id("x")});
  auto truncated = decompose("zzzzzzzzzz", tok_a, 7);
  CHECK(truncated == std::vector<std::uint32_t>(7, id("z")));
  CHECK(decompose("zzzzzzzzzz", tok_a, 3).size() == 3);

  Decomposer dec(tok_a, 4);
  const auto& first = dec("abcabcabcabc");
  CHECK(first.size() == 4);
  CHECK(&dec("abcabcabcabc") == &first);
  auto plain = tok_a;
  plain.byte_level = false;
  CHECK(code_of([&] { Decomposer bad(plain, 7); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("config json and validation") {
  lm::LmConfig lc = tiny_lm_config(300, false);
  HypernetConfig h = tiny_hyper_config(lc);
  h.alpha = 0.25;
  HypernetConfig back = hypernet_config_from_json(hypernet_config_to_json(h), lc);
  CHECK(back.alpha == 0.25);
  CHECK(back.layers == h.layers);
  CHECK(code_of([&] { hypernet_config_from_json(R"({"layers": 2, "depth": 3})", lc); }) == ErrorCode::InvalidFormat);
  CHECK(code_of([&] { hypernet_config_from_json(R"({"d_model": 8})", lc); }) == ErrorCode::InvalidArgument);
  h.alpha = -1;
  CHECK(code_of([&] { h.validate(); }) == ErrorCode::InvalidArgument);
  HypernetTrainConfig t;
  t.steps = 11;
  CHECK(hypernet_train_config_from_json(hypernet_train_config_to_json(t)).steps == 11);
  CHECK(HypernetConfig::for_lm(lc).d_model == lc.d_model);
}

TEST_CASE("predictions are per-token: shape, permutation and duplicates") {
  for (bool tied : {true, false}) {
    Fixture f = make_fixture(tied, 3);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> tokens;
      std::size_t n = 1 + rng.below(12);
      for (std::size_t i = 0; i < n; ++i) tokens.push_back(test::random_string(rng, 1 + rng.below(10), "abcehnrt gi"));
      auto pred = hypernet_forward(tokens, f.hp, f.lm, f.dec);
      REQUIRE(pred.in.shape == grad::Shape{n, 16});
      REQUIRE(pred.out.shape == grad::Shape{n, 16});

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<std::string> shuffled;
      for (auto p : perm) shuffled.push_back(tokens[p]);
      auto pred2 = hypernet_forward(shuffled, f.hp, f.lm, f.dec);
      double worst = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 16; ++c) {
          worst = std::max(worst, std::abs(pred2.in.at(i, c) - pred.in.at(perm[i], c)));
          worst = std::max(worst, std::abs(pred2.out.at(i, c) - pred.out.at(perm[i], c)));
        }
      CHECK(worst <= 1e-12);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (tokens[i] == tokens[j])
            for (std::size_t c = 0; c < 16; ++c) CHECK(pred.in.at(i, c) == pred.in.at(j, c));
    }
    if (tied) {
      auto pred = hypernet_forward({"abc", "the"}, f.hp, f.lm, f.dec);
      CHECK(pred.in.data == pred.out.data);
    }
  }
}

TEST_CASE("warmup loss matches a direct computation and reaches zero when forced") {
  for (bool tied : {true, false}) {
    Fixture f = make_fixture(tied, 5);
    const auto& va = f.tok_a.vocab();
    auto pred = hypernet_forward(va.tokens(), f.hp, f.lm, f.dec);
    std::vector<std::uint32_t> rows(va.size());
    std::iota(rows.begin(), rows.end(), 0u);
    double expected = naive_mean_l2(pred.in, rows, f.lm.phi_in->value);
    if (!tied) expected += naive_mean_l2(pred.out, rows, f.lm.phi_out->value);
    double got = warmup_loss(f.hp, f.lm, f.dec);
    CHECK(got >= 0);
    CHECK(std::abs(got - expected) <= 1e-10);

    // Zero heads plus biases equal to a constant embedding row reproduce it exactly.
    HypernetParams forced = f.hp.clone();
    lm::LmParams constant = f.lm.clone();
    std::fill(forced.in_w->value.data.begin(), forced.in_w->value.data.end(), 0.0);
    for (std::size_t c = 0; c < 16; ++c) forced.in_b->value.data[c] = 0.01 * double(c);
    for (std::size_t r = 0; r < constant.phi_in->value.rows(); ++r)
      for (std::size_t c = 0; c < 16; ++c) constant.phi_in->value.at(r, c) = 0.01 * double(c);
    if (!tied) {
      std::fill(forced.out_w->value.data.begin(), forced.out_w->value.data.end(), 0.0);
      std::fill(forced.out_b->value.data.begin(), forced.out_b->value.data.end(), -0.5);
      std::fill(constant.phi_out->value.data.begin(), constant.phi_out->value.data.end(), -0.5);
    }
    CHECK(warmup_loss(forced, constant, f.dec) == 0.0);
  }
}

TEST_CASE("auxiliary loss against a direct computation") {
  Rng rng(6);
  for (bool tied : {true, false}) {
    Fixture f = make_fixture(tied, 7);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::string> tokens;
      std::size_t n = 2 + rng.below(10);
      for (std::size_t i = 0; i < n; ++i) tokens.push_back(test::random_string(rng, 1 + rng.below(6), "abcdefg"));
      std::vector<std::uint32_t> rows;
      for (std::size_t i = 0; i < n; ++i)
        if (rng.below(2)) rows.push_back(static_cast<std::uint32_t>(i));
      Tensor tin = Tensor::randn({rows.size(), 16}, rng, 0.1), tout = Tensor::randn({rows.size(), 16}, rng, 0.1);
      Tape t;
      std::vector<const std::vector<std::uint32_t>*> decomps;
      for (const auto& s : tokens) decomps.push_back(&f.dec(s));
      Prediction p = predict_var(t, f.hp, source_table(t, f.hp, f.lm.phi_in->value), decomps);
      double got = aux_loss_var(t, p, rows, tin, tout, tied).value().item();
      double expected = 0;
      if (!rows.empty()) {
        expected = naive_mean_l2(p.in.value(), rows, tin);
        if (!tied) expected += naive_mean_l2(p.out.value(), rows, tout);
      }
      CHECK(std::abs(got - expected) <= 1e-10);
    }
  }
}

TEST_CASE("final loss composition and gradients") {
  Rng rng(8);
  for (bool tied : {true, false}) {
    Fixture f = make_fixture(tied, 9);
    auto& va = f.tok_a.vocab();
    std::vector<lm::Sequence> seqs;
    for (int s = 0; s < 3; ++s) {
      lm::Sequence seq(3 + rng.below(6));
      for (auto& id : seq) id = static_cast<std::uint32_t>(rng.below(va.size()));
      seqs.push_back(seq);
    }
    Rng subset_rng(1);
    MainBatch batch = make_main_batch(seqs, va, f.lm, va, 40, subset_rng);
    CHECK(batch.subset_tokens.size() == 40);
    CHECK(batch.aux_rows.size() == 40);  // every target token exists in V_a

    double main_only;
    {
      Tape t;
      LossParts parts = final_loss_var(t, f.hp, f.lm, f.dec, batch, 0.0);
      main_only = parts.total.value().item();
      CHECK(main_only == parts.main);
    }
    {
      Tape t;
      LossParts parts = final_loss_var(t, f.hp, f.lm, f.dec, batch, 0.5);
      CHECK(parts.main == main_only);
      CHECK(parts.aux > 0);
      CHECK(std::abs(parts.total.value().item() - (parts.main + 0.5 * parts.aux)) <= 1e-12);
    }

    // The LM is frozen; gradients flow to the hypernetwork only.
    lm::LmParams frozen = f.lm.clone();
    frozen.set_psi_trainable(false);
    for (const auto& p : frozen.embeddings()) p->trainable = false;
    test::LossFn loss = [&](Tape& t) { return final_loss_var(t, f.hp, frozen, f.dec, batch, 0.5).total; };
    CHECK(test::check_gradients(f.hp.all(), loss, rng, 10) <= 1e-3);
  }
}

TEST_CASE("extra byte rows are trainable inputs") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  tok::PretokenizerConfig pc;
  auto bpe = tok::make_bpe_tokenizer(tok::train_bpe(tok::count_pretokens(docs, pc), 150, false), pc, false);
  auto conv = convert::to_byte_level(bpe);
  REQUIRE(conv.extra_tokens > 0);
  lm::LmParams lm = lm::init_lm(tiny_lm_config(bpe.vocab().size(), true), 2);
  HypernetParams hp = init_hypernet(tiny_hyper_config(lm.cfg), lm, conv.extra_tokens, 3);
  CHECK(hp.n_extra() == conv.extra_tokens);
  Decomposer dec(conv.tokenizer, hp.cfg.max_decomp_len);
  std::string odd = "\x01\x02\xff";
  auto pred = hypernet_forward({odd}, hp, lm, dec);
  CHECK(std::isfinite(pred.in.at(0, 0)));
  Rng rng(3);
  test::LossFn loss = [&](Tape& t) {
    Prediction p = predict_var(t, hp, source_table(t, hp, lm.phi_in->value), {&dec(odd)});
    return t.sum(t.mul(p.in, p.in));
  };
  CHECK(test::check_gradients({hp.extra}, loss, rng, 12) <= 1e-3);

  ZettResult r = zett_transfer(lm, hp, bpe, bpe);
  CHECK(r.tokenizer.byte_level);
  CHECK(r.embeddings.in.rows() == r.tokenizer.vocab().size());
  HypernetParams wrong = init_hypernet(tiny_hyper_config(lm.cfg), lm, 0, 3);
  CHECK(code_of([&] { zett_transfer(lm, wrong, bpe, bpe); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("embeddings depend only on the token string") {
  Fixture f = make_fixture(false, 11);
  Rng rng(12);
  auto target = test::random_unigram(rng, "abcdefghij ", 60, 6, false);
  std::vector<double> rescored = target.scores;
  for (auto& s : rescored) s = -0.5 - 3.0 * rng.uniform();
  auto tok1 = tok::make_unigram_tokenizer(target);
  auto tok2 = tok::make_unigram_tokenizer(tok::UnigramModel(target.vocab, rescored));
  ZettResult a = zett_transfer(f.lm, f.hp, f.tok_a, tok1);
  ZettResult b = zett_transfer(f.lm, f.hp, f.tok_a, tok2);
  CHECK(a.embeddings.in.data == b.embeddings.in.data);
  CHECK(a.embeddings.out.data == b.embeddings.out.data);

  // A token's row is the same whatever vocabulary it appears in.
  auto id = static_cast<tok::TokenId>(target.vocab.size() - 1);
  auto single = hypernet_forward({a.tokenizer.vocab().token(id)}, f.hp, f.lm, f.dec);
  for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(single.in.at(0, c) - a.embeddings.in.at(id, c)) <= 1e-12);
}

TEST_CASE("training is deterministic and persists") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  auto tok_a = small_bpe(docs, 300);
  lm::LmParams lm = lm::init_lm(tiny_lm_config(tok_a.vocab().size(), false), 4);
  HypernetConfig hc = tiny_hyper_config(lm.cfg);
  sampler::SamplerConfig sc;
  sc.pool_size = 12;
  sc.batch_size = 4;
  sc.max_token_len = 6;
  sc.vocab_size = 300;
  HypernetTrainConfig tc = HypernetTrainConfig::desk();
  tc.warmup_steps = 6;
  tc.steps = 4;
  tc.warmup_batch = 64;
  tc.subset_size = 128;
  tc.lr_warmup_steps = 2;
  tc.seed = 5;
  std::vector<HyperEvent> events;
  HypernetParams a = train_hypernetwork(docs, lm, tok_a, hc, sc, tc, [&](const HyperEvent& e) { events.push_back(e); });
  HypernetParams b = train_hypernetwork(docs, lm, tok_a, hc, sc, tc);
  REQUIRE(events.size() == 10);
  CHECK(events.front().stage == HyperEvent::Warmup);
  CHECK(events.back().stage == HyperEvent::Main);
  auto pa = a.all(), pb = b.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

  HypernetTrainConfig warm = tc;
  warm.warmup_steps = 60;
  warm.steps = 0;
  warm.warmup_lr = 3e-3;
  HypernetParams w = train_hypernetwork(docs, lm, tok_a, hc, sc, warm);
  Decomposer dec(tok_a, hc.max_decomp_len);
  HypernetParams init = init_hypernet(hc, lm, 0, warm.seed);
  CHECK(warmup_loss(w, lm, dec) < warmup_loss(init, lm, dec));

  auto dir = test::temp_dir("hypernet");
  save_hypernet(a, (dir / "h.ckpt").string());
  HypernetParams loaded = load_hypernet((dir / "h.ckpt").string());
  auto pl = loaded.all();
  REQUIRE(pl.size() == pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pl[i]->name == pa[i]->name);
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      CHECK(pl[i]->value.data[j] == double(float(pa[i]->value.data[j])));
  }
  save_hypernet(loaded, (dir / "h2.ckpt").string());
  HypernetParams again = load_hypernet((dir / "h2.ckpt").string());
  for (std::size_t i = 0; i < pl.size(); ++i) CHECK(again.all()[i]->value.data == pl[i]->value.data);
  CHECK(code_of([&] { load_hypernet((dir / "missing.ckpt").string()); }) != ErrorCode::InvalidArgument);
}

TEST_CASE("continued training") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  auto tok_a = small_bpe(docs, 300);
  lm::LmParams lm = lm::init_lm(tiny_lm_config(tok_a.vocab().size(), true), 6);
  HypernetParams hp = init_hypernet(tiny_hyper_config(lm.cfg), lm, 0, 7);
  auto target = small_bpe(docs, 280);

  ContinuedConfig cc;
  cc.steps = 0;
  ContinuedResult same = continued_training(lm, hp, tok_a, target, docs, cc);
  auto before = lm.psi(), after = same.lm.psi();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i]->value.data == after[i]->value.data);
  for (std::size_t i = 0; i < hp.all().size(); ++i) CHECK(hp.all()[i]->value.data == same.hypernet.all()[i]->value.data);
  CHECK(same.tokenizer == target);

  cc.steps = 3;
  cc.tokens_per_batch = 64;
  cc.subset_size = 100;
  cc.lr = 1e-3;
  std::size_t calls = 0;
  ContinuedResult moved = continued_training(lm, hp, tok_a, target, docs, cc, [&](const HyperEvent& e) {
    CHECK(std::isfinite(e.loss));
    ++calls;
  });
  CHECK(calls == 3);
  bool changed = false;
  for (std::size_t i = 0; i < before.size(); ++i) changed |= before[i]->value.data != moved.lm.psi()[i]->value.data;
  CHECK(changed);
  // The input model is untouched.
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i]->value.data == lm.psi()[i]->value.data);
}
