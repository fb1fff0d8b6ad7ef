#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "support.hpp"
#include "zett/common/error.hpp"
#include "zett/grad/checkpoint.hpp"
#include "zett/grad/optim.hpp"
#include "zett/grad/tape.hpp"
#include "zett/simd/kernels.hpp"

using namespace zett;
using namespace zett::grad;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::vector<double> naive_gemm(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                               std::size_t k, std::size_t n, bool ta, bool tb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += (long double)(ta ? a[p * m + i] : a[i * k + p]) * (tb ? b[j * k + p] : b[p * n + j]);
      c[i * n + j] = double(s);
    }
  return c;
}

}  // namespace

TEST_CASE("every op matches central finite differences over 50 random shapes") {
  Rng rng(7);
  for (const auto& op : test::gradcheck_ops()) {
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      auto c = test::make_op_case(op, rng);
      worst = std::max(worst, test::check_gradients(c.params, c.loss, rng));
    }
    INFO(op << " worst relative error " << worst);
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("forward examples") {
  Tape t;
  Var z = t.constant(Tensor({2, 4}));
  Var s = t.softmax(z);
  for (double v : s.value().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  std::vector<std::int32_t> labels = {3, 0};
  CHECK(t.cross_entropy(z, labels).value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Rng rng(3);
  Var x = t.constant(Tensor::randn({5, 7}, rng, 3.0));
  Var ln = t.layer_norm(x, t.constant(Tensor({7}, 1.0)), t.constant(Tensor({7}, 0.0)), 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 7; ++c) mean += ln.value().at(r, c) / 7;
    for (std::size_t c = 0; c < 7; ++c) var += std::pow(ln.value().at(r, c) - mean, 2) / 7;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1) < 1e-10);
  }

  std::vector<std::int32_t> ignored = {-1, -1};
  CHECK(t.cross_entropy(z, ignored).value().item() == 0.0);
}

TEST_CASE("backward examples") {
  auto p = make_param("x", Tensor({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  {
    Tape t;
    t.backward(t.sum(t.param(p)));
  }
  for (double g : p->grad.data) CHECK(g == 1.0);

  auto x = make_param("x", Tensor::scalar(3.0));
  {
    Tape t;
    Var v = t.param(x);
    t.backward(t.mul(v, v));
  }
  CHECK(x->grad.item() == 6.0);

  // parameters used twice accumulate
  auto w = make_param("w", Tensor::scalar(2.0));
  {
    Tape t;
    t.backward(t.add(t.param(w), t.param(w)));
  }
  CHECK(w->grad.item() == 2.0);
}

TEST_CASE("tape errors") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  CHECK(code_of([&] { t.backward(a); }) == ErrorCode::NotScalar);
  CHECK(code_of([&] { t.matmul(a, a); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { t.add(a, t.constant(Tensor({3, 2}))); }) == ErrorCode::ShapeMismatch);
  std::vector<std::uint32_t> ids = {2};
  CHECK(code_of([&] { t.gather(a, ids); }) == ErrorCode::IdOutOfRange);
  std::vector<std::int32_t> bad = {0, 3};
  CHECK(code_of([&] { t.cross_entropy(a, bad); }) == ErrorCode::IdOutOfRange);
  CHECK(code_of([&] { t.attention(a, a, a, {}, 2, true); }) == ErrorCode::ShapeMismatch);

  auto p = make_param("p", Tensor::scalar(1.0));
  Tape t2;
  Var loss = t2.mul(t2.param(p), t2.param(p));
  t2.backward(loss);
  CHECK(code_of([&] { t2.backward(loss); }) == ErrorCode::StaleTape);
  CHECK(code_of([&] { t2.constant(Tensor::scalar(1)); }) == ErrorCode::StaleTape);
}

TEST_CASE("frozen parameters and constants receive no gradient") {
  auto frozen = make_param("f", Tensor({2, 2}, 1.0));
  frozen->trainable = false;
  auto live = make_param("l", Tensor({2, 2}, 0.5));
  Tape t;
  Var y = t.matmul(t.param(live), t.param(frozen));
  CHECK_FALSE(t.param(frozen).needs_grad());
  t.backward(t.sum(y));
  CHECK(frozen->grad.data == std::vector<double>(4, 0.0));
  CHECK(live->grad.data == std::vector<double>{2, 2, 2, 2});
}

TEST_CASE("causal attention ignores future positions") {
  Rng rng(11);
  Tensor q = Tensor::randn({6, 4}, rng, 1.0), k = Tensor::randn({6, 4}, rng, 1.0), v = Tensor::randn({6, 4}, rng, 1.0);
  std::vector<Segment> segs = {{0, 6}};
  auto run = [&](const Tensor& kk, const Tensor& vv) {
    Tape t;
    return t.attention(t.constant(q), t.constant(kk), t.constant(vv), segs, 2, true).value();
  };
  Tensor base = run(k, v);
  Tensor k2 = k, v2 = v;
  for (std::size_t c = 0; c < 4; ++c) k2.at(5, c) += 3, v2.at(5, c) -= 2;
  Tensor pert = run(k2, v2);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(pert.at(r, c) == base.at(r, c));
  bool changed = false;
  for (std::size_t c = 0; c < 4; ++c) changed |= pert.at(5, c) != base.at(5, c);
  CHECK(changed);
}

TEST_CASE("packed segments match separate calls") {
  Rng rng(5);
  Tensor q = Tensor::randn({7, 6}, rng, 1.0), k = Tensor::randn({7, 6}, rng, 1.0), v = Tensor::randn({7, 6}, rng, 1.0);
  Tape t;
  std::vector<Segment> segs = {{0, 3}, {3, 4}};
  Tensor packed = t.attention(t.constant(q), t.constant(k), t.constant(v), segs, 3, false).value();
  for (const auto& s : segs) {
    auto slice = [&](const Tensor& x) {
      Tensor out({s.length, 6});
      std::copy_n(x.row(s.offset), s.length * 6, out.data.begin());
      return out;
    };
    std::vector<Segment> one = {{0, s.length}};
    Tensor alone = t.attention(t.constant(slice(q)), t.constant(slice(k)), t.constant(slice(v)), one, 3, false).value();
    for (std::size_t r = 0; r < s.length; ++r)
      for (std::size_t c = 0; c < 6; ++c) CHECK(alone.at(r, c) == packed.at(s.offset + r, c));
  }
}

TEST_CASE("simd kernels agree with the scalar reference") {
  if (!simd::isa_supported(simd::Isa::Avx2)) return;
  const auto& s = simd::scalar_kernels();
  const auto& v = *simd::avx2_kernels();
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = rng.below(70);
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    double scale = 0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
    CHECK(std::abs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) <= 1e-13 * (scale + 1));
    CHECK(std::abs(s.sum_squares(a.data(), n) - v.sum_squares(a.data(), n)) <= 1e-13 * (s.sum_squares(a.data(), n) + 1));
    auto y1 = b, y2 = b;
    s.axpy(0.7, a.data(), y1.data(), n);
    v.axpy(0.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-15 * (std::abs(y1[i]) + 1));
    s.scale(1.3, y1.data(), n);
    v.scale(1.3, y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-15 * (std::abs(y1[i]) + 1));

    std::size_t m = 1 + rng.below(20), k = 1 + rng.below(40), nn = 1 + rng.below(20);
    std::vector<double> A(m * k), B(k * nn);
    for (auto& x : A) x = rng.normal();
    for (auto& x : B) x = rng.normal();
    auto ref = naive_gemm(A, B, m, k, nn, false, false);
    std::vector<double> c1(m * nn), c2(m * nn);
    s.gemm(A.data(), B.data(), c1.data(), m, k, nn, false);
    v.gemm(A.data(), B.data(), c2.data(), m, k, nn, false);
    for (std::size_t i = 0; i < m * nn; ++i) {
      CHECK(std::abs(c1[i] - ref[i]) <= 1e-12 * double(k));
      CHECK(std::abs(c2[i] - ref[i]) <= 1e-12 * double(k));
    }
  }
}

TEST_CASE("gemm variants match a naive triple loop") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + rng.below(30), k = 1 + rng.below(30), n = 1 + rng.below(30);
    std::vector<double> A(m * k), B(k * n);
    for (auto& x : A) x = rng.normal();
    for (auto& x : B) x = rng.normal();
    std::vector<double> c(m * n, 1.0);
    auto check = [&](bool ta, bool tb) {
      auto ref = naive_gemm(A, B, m, k, n, ta, tb);
      for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(c[i] - ref[i] - 1.0) <= 1e-12 * double(k));
    };
    c.assign(m * n, 1.0);
    simd::gemm_nn(A.data(), B.data(), c.data(), m, k, n, true);
    check(false, false);
    c.assign(m * n, 1.0);
    simd::gemm_nt(A.data(), B.data(), c.data(), m, k, n, true);  // B read as [n,k]
    check(false, true);
    c.assign(m * n, 1.0);
    simd::gemm_tn(A.data(), B.data(), c.data(), m, k, n, true);  // A read as [k,m]
    check(true, false);
  }
}

TEST_CASE("adamw") {
  auto p = make_param("p", Tensor({3}, std::vector<double>{1, -2, 3}));
  p->zero_grad();
  AdamW zero_decay({0.9, 0.95, 1e-8, 0.0});
  zero_decay.step({p}, 0.1);
  CHECK(p->value.data == std::vector<double>{1, -2, 3});

  // first step with bias correction moves each weight by lr*g/(|g|+eps) plus decay
  p->grad.data = {0.5, -0.25, 0.0};
  AdamW opt;
  opt.step({p, p}, 0.01);
  CHECK(p->value.data[0] == doctest::Approx(1 - 0.01 * (0.5 / (0.5 + 1e-8) + 0.01 * 1)).epsilon(1e-14));
  CHECK(p->value.data[1] == doctest::Approx(-2 - 0.01 * (-0.25 / (0.25 + 1e-8) + 0.01 * -2)).epsilon(1e-14));
  CHECK(p->value.data[2] == doctest::Approx(3 - 0.01 * 0.01 * 3).epsilon(1e-14));

  auto nodecay = make_param("b", Tensor::scalar(4.0), false);
  nodecay->zero_grad();
  opt.step({nodecay}, 0.5);
  CHECK(nodecay->value.item() == 4.0);
}

TEST_CASE("global norm clipping") {
  auto a = make_param("a", Tensor({2}, std::vector<double>{0.12, 0.0}));
  auto b = make_param("b", Tensor({1}, std::vector<double>{0.0}));
  a->grad = Tensor({2}, std::vector<double>{0.12, 0.0});
  b->grad = Tensor({1}, std::vector<double>{0.16});
  CHECK(clip_global_norm({a, b}, 0.1) == doctest::Approx(0.2));
  CHECK(a->grad.data[0] == doctest::Approx(0.06));
  CHECK(b->grad.data[0] == doctest::Approx(0.08));
  CHECK(clip_global_norm({a, b}, 0.5) == doctest::Approx(0.1));
  CHECK(a->grad.data[0] == doctest::Approx(0.06));
}

TEST_CASE("learning-rate schedule") {
  LrSchedule s;
  CHECK(s(0) == 0.0);
  CHECK(s(5000) == doctest::Approx(3e-5));
  CHECK(s(10000) == doctest::Approx(6e-5));
  CHECK(s(s.total_steps) == doctest::Approx(6e-6));
  CHECK(s(s.total_steps + 100) == doctest::Approx(6e-6));
  CHECK(s(105000) == doctest::Approx(0.5 * (6e-5 + 6e-6)));
  for (std::uint64_t k = 10000; k < s.total_steps; k += 997) CHECK(s(k + 997) <= s(k));
}

TEST_CASE("matrix block layout is bit-exact") {
  std::ostringstream out;
  write_matrix_block(out, Tensor({2, 1}, std::vector<double>{1.0, -0.5}), 2);
  std::string bytes = out.str();
  REQUIRE(bytes.size() == 8 + 4 + 4 + 1 + 8);
  CHECK(bytes.substr(0, 8) == "ZETTEMB1");
  CHECK(bytes.substr(8, 9) == std::string("\x02\x00\x00\x00\x01\x00\x00\x00\x02", 9));
  CHECK(bytes.substr(17) == std::string("\x00\x00\x80\x3f\x00\x00\x00\xbf", 8));
  std::istringstream in(bytes);
  std::uint8_t role = 0;
  Tensor back = read_matrix_block(in, &role);
  CHECK(role == 2);
  CHECK(back.shape == Shape{2, 1});
  CHECK(back.data == std::vector<double>{1.0, -0.5});
}

TEST_CASE("checkpoint round trip") {
  Rng rng(1);
  auto w = make_param("block.0.w", Tensor::randn({3, 4}, rng, 1.0));
  auto b = make_param("block.0.b", Tensor::randn({4}, rng, 1.0));
  auto dir = test::temp_dir("ckpt");
  auto path = (dir / "m.ckpt").string();
  save_checkpoint(make_checkpoint({w, b, w}, R"({"d":4})"), path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.metadata == R"({"d":4})");
  CHECK(back.tensors.size() == 2);

  auto w2 = make_param("block.0.w", Tensor({3, 4}));
  auto b2 = make_param("block.0.b", Tensor({4}));
  load_parameters(back, {w2, b2});
  for (std::size_t i = 0; i < 12; ++i) CHECK(w2->value.data[i] == double(float(w->value.data[i])));
  CHECK(b2->value.shape == Shape{4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(b2->value.data[i] == double(float(b->value.data[i])));

  auto wrong = make_param("block.0.b", Tensor({5}));
  CHECK(code_of([&] { load_parameters(back, {wrong}); }) == ErrorCode::ShapeMismatch);
  auto missing = make_param("nope", Tensor({1}));
  CHECK(code_of([&] { load_parameters(back, {missing}); }) == ErrorCode::InvalidFormat);

  std::string raw;
  {
    std::ifstream f(path, std::ios::binary);
    raw.assign(std::istreambuf_iterator<char>(f), {});
  }
  for (std::size_t cut : {std::size_t(4), std::size_t(20), raw.size() - 3}) {
    std::ofstream(path, std::ios::binary) << raw.substr(0, cut);
    CHECK(code_of([&] { load_checkpoint(path); }) == ErrorCode::InvalidFormat);
  }
  std::ofstream(path, std::ios::binary) << "ZETTEMB1" << raw.substr(8);
  CHECK(code_of([&] { load_checkpoint(path); }) == ErrorCode::InvalidFormat);
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
  auto run = [] {
    Rng rng(21);
    auto w = make_param("w", Tensor::randn({4, 3}, rng, 0.5));
    auto g = make_param("g", Tensor({3}, 1.0), false);
    auto be = make_param("b", Tensor({3}), false);
    Tensor x = Tensor::randn({5, 4}, rng, 1.0);
    std::vector<std::int32_t> labels = {0, 1, 2, 1, -1};
    AdamW opt;
    for (int step = 0; step < 20; ++step) {
      zero_grads({w, g, be});
      Tape t;
      Var h = t.layer_norm(t.gelu(t.matmul(t.constant(x), t.param(w))), t.param(g), t.param(be));
      t.backward(t.cross_entropy(h, labels));
      clip_global_norm({w, g, be}, 0.1);
      opt.step({w, g, be}, 1e-2);
    }
    return std::vector<double>(w->value.data.begin(), w->value.data.end());
  };
  CHECK(run() == run());
}
