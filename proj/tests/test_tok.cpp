#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "support.hpp"
#include "zett/common/error.hpp"
#include "zett/tok/bpe_trainer.hpp"
#include "zett/tok/io.hpp"
#include "zett/tok/pretokenizer.hpp"
#include "zett/tok/tokenizer.hpp"
#include "zett/tok/unigram.hpp"

using namespace zett;
using namespace zett::tok;
using zett::test::vocab_of;

namespace {

UnigramModel model_of(std::initializer_list<std::pair<const char*, double>> entries) {
  Vocabulary v;
  std::vector<double> s;
  for (auto& [t, score] : entries) {
    v.add(t);
    s.push_back(score);
  }
  return UnigramModel(std::move(v), std::move(s));
}

std::vector<std::string> strings(const std::vector<TokenId>& ids, const Vocabulary& v) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(v.token(id));
  return out;
}

using Strs = std::vector<std::string>;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

TokenizerSpec byte_unigram(zett::Rng& rng) {
  Vocabulary v;
  std::vector<double> s;
  for (int b = 0; b < 256; ++b) {
    v.add(std::string(1, static_cast<char>(b)));
    s.push_back(-8.0);
  }
  for (const char* w : {"the", " the", "and", " and", "in", " in", "ing", "er", " a", "th", "he", "é"}) {
    v.add(w);
    s.push_back(-1.0 - rng.uniform());
  }
  return make_unigram_tokenizer(UnigramModel(std::move(v), std::move(s)));
}

}  // namespace

TEST_CASE("vocabulary rejects duplicates and resolves ids") {
  Vocabulary v = vocab_of({"a", "b", "ab"});
  CHECK(v.size() == 3);
  CHECK(*v.find("ab") == 2);
  CHECK_FALSE(v.find("c"));
  CHECK(code_of([&] { v.add("a"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { v.add(""); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { (void)v.token(3); }) == ErrorCode::IdOutOfRange);
}

TEST_CASE("pretokenize examples") {
  PretokenizerConfig cfg;
  CHECK(pretokenize("hi there", cfg) == Strs{"hi", " there"});
  CHECK(pretokenize("", cfg).empty());
  CHECK(pretokenize("don't", cfg) == Strs{"don", "'t"});
  CHECK(pretokenize("x  y", cfg) == Strs{"x", " ", " y"});
  CHECK(pretokenize("3.14", cfg) == Strs{"3", ".", "14"});
  CHECK(pretokenize("a\n\nb", cfg) == Strs{"a", "\n", "\n", "b"});
  CHECK(pretokenize("end.  ", cfg) == Strs{"end", ".", "  "});
  CHECK(pretokenize("we'll go", cfg) == Strs{"we", "'ll", " go"});
  // Decomposed "naïve": i + U+0308 stays inside the word.
  CHECK(pretokenize("nai\xCC\x88ve", cfg) == Strs{"nai\xCC\x88ve"});
  // Devanagari vowel signs are marks.
  CHECK(pretokenize("\xE0\xA4\x95\xE0\xA5\x8B\xE0\xA4\xA8\xE0\xA5\x87", cfg).size() == 1);
  PretokenizerConfig pre;
  pre.prefix_space = true;
  CHECK(pretokenize("a", pre) == Strs{" a"});
  CHECK(pretokenize("", pre).empty());
}

TEST_CASE("pretokenize splits long whitespace runs") {
  PretokenizerConfig cfg;
  cfg.whitespace_run_max = 4;
  auto pieces = pretokenize("a" + std::string(11, ' ') + "b", cfg);
  CHECK(pieces == Strs{"a", "    ", "    ", "  ", " b"});
  cfg.whitespace_run_max = 0;
  CHECK(code_of([&] { pretokenize("a", cfg); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("pretokenize concatenation reproduces input on random bytes") {
  zett::Rng rng(11);
  for (int iter = 0; iter < 2000; ++iter) {
    PretokenizerConfig cfg;
    cfg.prefix_space = rng.below(2) == 1;
    cfg.whitespace_run_max = 1 + static_cast<int>(rng.below(20));
    std::string text = iter % 2 ? zett::test::random_bytes(rng, rng.below(40))
                                : zett::test::random_string(rng, rng.below(60), "ab 1.'\n\t\xC3\xA9s");
    std::string joined;
    for (const auto& p : pretokenize(text, cfg)) {
      CHECK_FALSE(p.empty());
      joined += p;
    }
    CHECK(joined == normalize(text, cfg));
  }
}

TEST_CASE("unigram_segment examples") {
  auto m = model_of({{"a", -1}, {"b", -1}, {"ab", -1.5}});
  CHECK(strings(unigram_segment("ab", m), m.vocab) == Strs{"ab"});
  CHECK(strings(unigram_segment_brute("ab", m), m.vocab) == Strs{"ab"});
  auto single = model_of({{"a", -1}});
  CHECK(strings(unigram_segment("aa", single), single.vocab) == Strs{"a", "a"});
  CHECK(code_of([&] { unigram_segment("aq", single); }) == ErrorCode::Unsegmentable);
  CHECK(code_of([&] { unigram_segment_brute("aq", single); }) == ErrorCode::Unsegmentable);
  auto zero = model_of({{"a", 0}});
  CHECK(unigram_segment_brute("a", zero) == std::vector<TokenId>{0});
  auto abc = model_of({{"a", -1}, {"b", -1}, {"c", -1}, {"bc", -1.2}});
  CHECK(strings(unigram_segment_brute("abc", abc), abc.vocab) == Strs{"a", "bc"});
  CHECK(strings(unigram_segment("abc", abc), abc.vocab) == Strs{"a", "bc"});
  CHECK(code_of([&] { unigram_segment_brute(std::string(13, 'a'), single); }) == ErrorCode::InputTooLong);
}

TEST_CASE("unigram tie-break: fewer tokens, then earliest cuts") {
  // "abc": [ab, c] and [a, bc] both score -2, [a, b, c] scores -2 too.
  auto m = model_of({{"a", -2.0 / 3}, {"b", -2.0 / 3}, {"c", -2.0 / 3}, {"ab", -1}, {"bc", -1}});
  m.scores = {-0.5, -0.75, -0.75, -1.25, -1.5};
  // [a,b,c] = -2.0, [ab,c] = -2.0, [a,bc] = -2.0: two-token options win; cuts {1} < {2}.
  CHECK(strings(unigram_segment("abc", m), m.vocab) == Strs{"a", "bc"});
  CHECK(strings(unigram_segment_brute("abc", m), m.vocab) == Strs{"a", "bc"});
}

TEST_CASE("Viterbi agrees with brute force on random models") {
  zett::Rng rng(2024);
  int checked = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    bool dyadic = iter % 2 == 0;
    auto m = zett::test::random_unigram(rng, "abc", 4 + rng.below(20), 4, dyadic);
    std::string x = zett::test::random_string(rng, 1 + rng.below(12), "abc");
    auto fast = unigram_segment(x, m);
    auto slow = unigram_segment_brute(x, m);
    CHECK(fast == slow);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("positive score scaling leaves segmentations unchanged") {
  zett::Rng rng(5);
  for (int iter = 0; iter < 300; ++iter) {
    auto m = zett::test::random_unigram(rng, "xyz", 12, 4, iter % 3 == 0);
    auto scaled = m;
    double c = 0.5 + 4 * rng.uniform();
    if (iter % 3 == 0) c = 4.0;  // exact for dyadic scores
    for (double& s : scaled.scores) s *= c;
    std::string x = zett::test::random_string(rng, 1 + rng.below(12), "xyz");
    CHECK(unigram_segment(x, m) == unigram_segment(x, scaled));
  }
}

TEST_CASE("bpe_encode examples") {
  BpeModel m(vocab_of({"a", "b", "ab"}), {{"a", "b"}});
  CHECK(strings(bpe_encode("aab", m, true), m.vocab()) == Strs{"a", "ab"});
  BpeModel none(vocab_of({"a", "b"}), {});
  CHECK(strings(bpe_encode("ab", none, true), none.vocab()) == Strs{"a", "b"});
  BpeModel two(vocab_of({"a", "b", "ab", "abab"}), {{"a", "b"}, {"ab", "ab"}});
  CHECK(strings(bpe_encode("abab", two, true), two.vocab()) == Strs{"abab"});
  CHECK(code_of([&] { bpe_encode("ac", m, true); }) == ErrorCode::Unsegmentable);
  // Leftmost application on equal rank: "aaa" with (a,a) -> [aa, a].
  BpeModel aa(vocab_of({"a", "aa"}), {{"a", "a"}});
  CHECK(strings(bpe_encode("aaa", aa, true), aa.vocab()) == Strs{"aa", "a"});
}

TEST_CASE("bpe model validates merge order") {
  CHECK(code_of([] { BpeModel(vocab_of({"a", "b", "ab", "abb"}), {{"ab", "b"}, {"a", "b"}}); }) ==
        ErrorCode::InvalidFormat);
  CHECK(code_of([] { BpeModel(vocab_of({"a", "b"}), {{"a", "b"}}); }) == ErrorCode::InvalidFormat);
}

TEST_CASE("encode examples") {
  auto m = model_of({{"h", -5}, {"i", -5}, {" ", -5}, {"hi", -1}, {" hi", -1}});
  auto t = make_unigram_tokenizer(m);
  CHECK(encode("", t).empty());
  CHECK(strings(encode("hi hi", t), t.vocab()) == Strs{"hi", " hi"});
  std::vector<TokenId> none;
  CHECK(decode(none, t).empty());
  CHECK(decode(std::vector<TokenId>{3}, t) == "hi");
  CHECK(code_of([&] { decode(std::vector<TokenId>{9}, t); }) == ErrorCode::IdOutOfRange);
}

TEST_CASE("byte-level round trip and boundary property on random texts") {
  zett::Rng rng(77);
  auto t = byte_unigram(rng);
  CHECK(t.byte_level);
  PretokenizerConfig pre;
  pre.prefix_space = true;
  auto tp = t;
  tp.pretok = pre;
  for (int iter = 0; iter < 1000; ++iter) {
    std::string text = iter % 2 ? zett::test::random_bytes(rng, rng.below(50))
                                : zett::test::random_string(rng, rng.below(80), "the and in a\n  \xC3\xA9");
    const auto& spec = iter % 4 < 2 ? t : tp;
    auto ids = encode(text, spec);
    CHECK(decode(ids, spec) == normalize(text, spec.pretok));
    CHECK(decode_text(ids, spec) == text);
    // Each token lies within one pretoken: walking tokens never crosses a piece end.
    std::size_t piece = 0, used = 0;
    auto pieces = pretokenize(text, spec.pretok);
    for (auto id : ids) {
      const auto& tokstr = spec.vocab().token(id);
      REQUIRE(piece < pieces.size());
      CHECK(used + tokstr.size() <= pieces[piece].size());
      used += tokstr.size();
      if (used == pieces[piece].size()) ++piece, used = 0;
    }
    CHECK(piece == pieces.size());
  }
}

TEST_CASE("byte_level flag requires byte coverage") {
  BpeModel m(vocab_of({"a", "b", "ab"}), {{"a", "b"}});
  CHECK(code_of([&] { make_bpe_tokenizer(m, {}, true); }) == ErrorCode::InvalidFormat);
}

TEST_CASE("native json round trip, including non-UTF-8 tokens") {
  zett::Rng rng(3);
  auto t = byte_unigram(rng);
  t.pretok.prefix_space = true;
  t.pretok.whitespace_run_max = 9;
  auto back = tokenizer_from_json(tokenizer_to_json(t));
  CHECK(back == t);
  CHECK(tokenizer_to_json(t).find("\"b64\"") != std::string::npos);

  BpeModel m(vocab_of({"a", "b", "\xFF", "ab", "ab\xFF"}), {{"a", "b"}, {"ab", "\xFF"}});
  auto bt = make_bpe_tokenizer(m);
  auto dir = zett::test::temp_dir("tok_io");
  save_tokenizer(bt, dir / "t.json");
  CHECK(load_tokenizer(dir / "t.json") == bt);

  CHECK(code_of([] { tokenizer_from_json(R"({"kind":"unigram","vocab":[["a"]]})"); }) == ErrorCode::InvalidFormat);
  CHECK(code_of([] { tokenizer_from_json(R"({"kind":"bpe","vocab":[["a"]],"extra":1})"); }) ==
        ErrorCode::InvalidFormat);
  CHECK(code_of([] { tokenizer_from_json("{"); }) == ErrorCode::InvalidFormat);
}

TEST_CASE("community tokenizer files are mapped into the native model") {
  auto uni = tokenizer_from_json(
      R"({"model":{"type":"Unigram","vocab":[["<unk>",0.0],["▁the",-2.0],["t",-4.0],["<0x41>",-9.0]]},
          "pre_tokenizer":{"type":"Metaspace","add_prefix_space":true}})");
  CHECK(uni.kind() == ModelKind::Unigram);
  CHECK(uni.vocab().contains(" the"));
  CHECK(uni.vocab().contains("A"));
  CHECK(uni.pretok.prefix_space);

  auto bpe = tokenizer_from_json(
      R"({"model":{"type":"BPE","vocab":{"a":0,"b":1,"ab":2},"merges":["a b"]}})");
  CHECK(strings(encode("aab", bpe), bpe.vocab()) == Strs{"a", "ab"});
}

TEST_CASE("bundled GPT-2 tokenizer loads as byte-level BPE") {
  auto t = load_tokenizer(zett::test::data_dir() / "gpt2" / "tokenizer.json");
  CHECK(t.kind() == ModelKind::Bpe);
  CHECK(t.byte_level);
  CHECK(t.vocab().size() == 50257);
  CHECK(strings(encode("Hello world", t), t.vocab()) == Strs{"Hello", " world"});
  // Known GPT-2 ids.
  CHECK(encode("Hello world", t) == std::vector<TokenId>{15496, 995});
  std::string text = "In the beginning God created the heaven and the earth. caf\xC3\xA9 \xFF";
  CHECK(decode(encode(text, t), t) == text);
}

TEST_CASE("bpe trainer learns frequent pairs deterministically") {
  std::vector<PretokenCount> counts{{"ab", 5}, {"abc", 3}, {"c", 1}};
  auto m = train_bpe(counts, 5, false);
  CHECK(m.merges().front() == Merge{"a", "b"});
  CHECK(m.merges().size() == 2);
  CHECK(m.merges()[1] == Merge{"ab", "c"});
  CHECK(train_bpe(counts, 5, false) == m);
  auto bl = train_bpe(counts, 300, true);
  auto t = make_bpe_tokenizer(bl, {}, true);
  CHECK(t.byte_level);
}
