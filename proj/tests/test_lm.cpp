#include <cmath>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "support.hpp"
#include "zett/common/corpus.hpp"
#include "zett/common/error.hpp"
#include "zett/lm/train.hpp"
#include "zett/tok/bpe_trainer.hpp"

using namespace zett;
using namespace zett::lm;

namespace {

LmConfig tiny_config(std::size_t vocab, bool tied = true) {
  LmConfig c;
  c.layers = 2;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_dim = 12;
  c.max_seq_len = 16;
  c.vocab_size = vocab;
  c.tied_embeddings = tied;
  return c;
}

std::vector<Sequence> random_seqs(Rng& rng, std::size_t n, std::size_t vocab, std::size_t max_len) {
  std::vector<Sequence> out(n);
  for (auto& s : out) {
    s.resize(2 + rng.below(max_len - 1));
    for (auto& id : s) id = static_cast<std::uint32_t>(rng.below(vocab));
  }
  return out;
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

tok::TokenizerSpec small_bpe(const std::vector<std::string>& docs, std::size_t size) {
  tok::PretokenizerConfig pc;
  return tok::make_bpe_tokenizer(tok::train_bpe(tok::count_pretokens(docs, pc), size, true), pc, true);
}

}  // namespace

TEST_CASE("config validation and json") {
  LmConfig c = tiny_config(10);
  CHECK(lm_config_from_json(lm_config_to_json(c)) == c);
  c.heads = 3;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { lm_config_from_json(R"({"layers": 2, "width": 3})"); }) == ErrorCode::InvalidFormat);
  CHECK(code_of([&] { lm_config_from_json(R"({"layers": "two"})"); }) == ErrorCode::InvalidFormat);
  LmTrainConfig t;
  t.steps = 17;
  CHECK(lm_train_config_from_json(lm_train_config_to_json(t)).steps == 17);
}

TEST_CASE("untrained loss is near ln(vocab)") {
  Rng rng(1);
  for (std::size_t vocab : {16u, 64u, 300u}) {
    LmParams p = init_lm(tiny_config(vocab), 3);
    auto seqs = random_seqs(rng, 8, vocab, 16);
    double loss = lm_loss(p, seqs);
    CHECK(std::abs(loss - std::log(double(vocab))) < 0.1 * std::log(double(vocab)));
  }
}

TEST_CASE("loss is invariant to batch order") {
  Rng rng(2);
  LmParams p = init_lm(tiny_config(20), 5);
  auto seqs = random_seqs(rng, 9, 20, 16);
  double a = lm_loss(p, seqs);
  std::reverse(seqs.begin(), seqs.end());
  CHECK(lm_loss(p, seqs) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("future tokens do not affect earlier positions") {
  Rng rng(3);
  LmParams p = init_lm(tiny_config(20), 7);
  for (int trial = 0; trial < 20; ++trial) {
    auto seqs = random_seqs(rng, 1, 20, 16);
    Sequence s = seqs[0];
    std::size_t cut = rng.below(s.size());
    Sequence s2 = s;
    for (std::size_t i = cut + 1; i < s2.size(); ++i) s2[i] = (s2[i] + 1 + std::uint32_t(rng.below(19))) % 20;
    auto hidden = [&](const Sequence& x) {
      std::vector<Sequence> one = {x};
      PackedBatch b = pack(one, 16);
      Tape t;
      return lm_hidden(t, p, t.param(p.phi_in), b).value();
    };
    Tensor h1 = hidden(s), h2 = hidden(s2);
    for (std::size_t r = 0; r <= cut; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(h1.at(r, c) == h2.at(r, c));
  }
}

TEST_CASE("subset loss") {
  Rng rng(4);
  for (bool tied : {true, false}) {
    LmParams p = init_lm(tiny_config(30, tied), 9);
    auto seqs = random_seqs(rng, 5, 30, 16);
    std::vector<std::uint32_t> all(30);
    for (std::uint32_t i = 0; i < 30; ++i) all[i] = i;
    CHECK(lm_loss_subset(p, seqs, all) == lm_loss(p, seqs));

    std::set<std::uint32_t> used;
    for (const auto& s : seqs) used.insert(s.begin(), s.end());
    std::vector<std::uint32_t> batch_only(used.begin(), used.end());
    CHECK(lm_loss_subset(p, seqs, batch_only) <= lm_loss(p, seqs));

    std::vector<std::uint32_t> missing(batch_only.begin() + 1, batch_only.end());
    CHECK(code_of([&] { lm_loss_subset(p, seqs, missing); }) == ErrorCode::TokenOutsideSubset);
  }
}

TEST_CASE("input errors") {
  LmParams p = init_lm(tiny_config(10), 1);
  std::vector<Sequence> bad = {{1, 2, 10}};
  CHECK(code_of([&] { lm_loss(p, bad); }) == ErrorCode::IdOutOfRange);
  std::vector<Sequence> longer = {Sequence(17, 1)};
  CHECK(code_of([&] { lm_loss(p, longer); }) == ErrorCode::SequenceTooLong);
}

TEST_CASE("tied embeddings share storage") {
  LmParams p = init_lm(tiny_config(10, true), 1);
  CHECK(p.phi_in == p.phi_out);
  p.phi_in->value.at(3, 2) = 42.0;
  CHECK(p.phi_out->value.at(3, 2) == 42.0);
  LmParams c = p.clone();
  CHECK(c.phi_in == c.phi_out);
  CHECK(c.phi_in != p.phi_in);
  c.phi_in->value.at(3, 2) = 1.0;
  CHECK(p.phi_in->value.at(3, 2) == 42.0);
  CHECK(init_lm(tiny_config(10, false), 1).embeddings().size() == 2);
}

TEST_CASE("end-to-end gradient of the LM loss") {
  Rng rng(5);
  for (bool tied : {true, false}) {
    LmParams p = init_lm(tiny_config(12, tied), 11);
    for (auto& q : p.all())
      for (double& v : q->value.data) v += 0.3 * rng.normal();
    auto seqs = random_seqs(rng, 3, 12, 8);
    PackedBatch b = pack(seqs, 16);
    auto loss = [&](Tape& t) { return lm_loss_var(t, p, t.param(p.phi_in), t.param(p.phi_out), b); };
    CHECK(test::check_gradients(p.all(), loss, rng, 12) <= 1e-3);
  }
}

TEST_CASE("training") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  auto tk = small_bpe(docs, 300);
  LmConfig cfg = tiny_config(tk.vocab().size());
  cfg.d_model = 16;
  cfg.max_seq_len = 32;
  LmTrainConfig tc;
  tc.steps = 0;
  tc.seed = 4;
  LmParams zero = train_lm(docs, tk, cfg, tc);
  LmParams init = init_lm(cfg, 4);
  for (std::size_t i = 0; i < zero.all().size(); ++i) CHECK(zero.all()[i]->value == init.all()[i]->value);

  tc.steps = 60;
  tc.tokens_per_batch = 256;
  tc.warmup_steps = 5;
  std::vector<double> losses;
  LmParams a = train_lm(docs, tk, cfg, tc, [&](const TrainEvent& e) { losses.push_back(e.loss); });
  LmParams b = train_lm(docs, tk, cfg, tc);
  for (std::size_t i = 0; i < a.all().size(); ++i) CHECK(a.all()[i]->value == b.all()[i]->value);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += losses[i], last += losses[losses.size() - 1 - i];
  CHECK(last < first);

  CHECK(code_of([&] { train_lm({}, tk, cfg, tc); }) == ErrorCode::EmptyCorpus);
  cfg.vocab_size += 1;
  CHECK(code_of([&] { train_lm(docs, tk, cfg, tc); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("checkpoint round trip") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  auto tk = small_bpe(docs, 280);
  for (bool tied : {true, false}) {
    LmParams p = init_lm(tiny_config(tk.vocab().size(), tied), 2);
    auto path = (test::temp_dir("lm") / "lm.ckpt").string();
    save_lm(p, tk, path);
    LoadedLm back = load_lm(path);
    CHECK(back.params.cfg == p.cfg);
    CHECK(back.tokenizer == tk);
    CHECK((back.params.phi_in == back.params.phi_out) == tied);
    auto a = p.all(), b = back.params.all();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      for (std::size_t j = 0; j < a[i]->value.size(); ++j)
        CHECK(b[i]->value.data[j] == double(float(a[i]->value.data[j])));
    }
  }
}

TEST_CASE("window encoding") {
  auto docs = load_corpus((test::data_dir() / "corpus" / "mixed_script.txt").string());
  auto tk = small_bpe(docs, 280);
  auto windows = encode_windows(docs, tk, 8);
  std::size_t total = 0;
  for (const auto& d : docs) total += tok::encode(d, tk).size();
  std::size_t kept = 0;
  for (const auto& w : windows) {
    CHECK(w.size() >= 2);
    CHECK(w.size() <= 8);
    kept += w.size();
  }
  CHECK(kept <= total);
  CHECK(kept + docs.size() >= total);  // at most one dropped single-token tail per document
}
