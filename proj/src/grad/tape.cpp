#include "zett/grad/tape.hpp"

#include <algorithm>
#include <cmath>

#include "zett/common/error.hpp"
#include "zett/common/parallel.hpp"
#include "zett/simd/kernels.hpp"

namespace zett::grad {

const Tensor& Var::value() const { return tape->nodes_[index].value; }
const Tensor& Var::grad() const { return tape->nodes_[index].grad; }
bool Var::needs_grad() const { return tape->nodes_[index].needs_grad; }

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape == b.shape, ErrorCode::ShapeMismatch,
          std::string(op) + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = last;
  return out;
}

}  // namespace

void Tape::check(Var v) const {
  require(v.tape == this && v.index < nodes_.size(), ErrorCode::InvalidArgument, "variable from another tape");
}

Var Tape::push(Tensor value, bool needs_grad, std::function<void()> backward) {
  require(!consumed_, ErrorCode::StaleTape, "tape already ran backward; record a new forward pass");
  nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(backward), nullptr});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_of(Var v) {
  Node& n = nodes_[v.index];
  if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::param(const Parameter& p) {
  Var v = push(p->value, p->trainable);
  nodes_[v.index].param = p.get();
  return v;
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  check(a), check(b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(B.shape.size() == 2, ErrorCode::ShapeMismatch, "matmul: right operand must be 2-D");
  const std::size_t M = A.rows(), K = A.cols();
  const std::size_t N = transpose_b ? B.shape[0] : B.shape[1];
  const std::size_t BK = transpose_b ? B.shape[1] : B.shape[0];
  require(BK == K, ErrorCode::ShapeMismatch,
          "matmul: " + shape_string(A.shape) + " x " + shape_string(B.shape) + (transpose_b ? "^T" : ""));
  Tensor out(with_last(A.shape, N));
  if (transpose_b) simd::gemm_nt(A.data.data(), B.data.data(), out.data.data(), M, K, N, false);
  else simd::gemm_nn(A.data.data(), B.data.data(), out.data.data(), M, K, N, false);
  bool ng = a.needs_grad() || b.needs_grad();
  Var out_var = push(std::move(out), ng);
  if (ng) {
    nodes_[out_var.index].backward = [this, a, b, out_var, M, K, N, transpose_b] {
      const double* dc = nodes_[out_var.index].grad.data.data();
      const double* av = nodes_[a.index].value.data.data();
      const double* bv = nodes_[b.index].value.data.data();
      if (nodes_[a.index].needs_grad) {
        double* da = grad_of(a).data.data();
        if (transpose_b) simd::gemm_nn(dc, bv, da, M, N, K, true);
        else simd::gemm_nt(dc, bv, da, M, N, K, true);
      }
      if (nodes_[b.index].needs_grad) {
        double* db = grad_of(b).data.data();
        if (transpose_b) simd::gemm_tn(dc, av, db, N, M, K, true);
        else simd::gemm_tn(av, dc, db, K, M, N, true);
      }
    };
  }
  return out_var;
}

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  simd::kernels().axpy(1.0, b.value().data.data(), out.data.data(), out.size());
  bool ng = a.needs_grad() || b.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, b, o] {
      const Tensor& g = nodes_[o.index].grad;
      for (Var x : {a, b})
        if (nodes_[x.index].needs_grad) simd::kernels().axpy(1.0, g.data.data(), grad_of(x).data.data(), g.size());
    };
  }
  return o;
}

Var Tape::add_bias(Var a, Var b) {
  check(a), check(b);
  const Tensor& A = a.value();
  require(b.value().size() == A.cols(), ErrorCode::ShapeMismatch, "add_bias: bias size must equal column count");
  Tensor out = A;
  const std::size_t R = A.rows(), C = A.cols();
  const double* bias = b.value().data.data();
  for (std::size_t r = 0; r < R; ++r) simd::kernels().axpy(1.0, bias, out.row(r), C);
  bool ng = a.needs_grad() || b.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, b, o, R, C] {
      const Tensor& g = nodes_[o.index].grad;
      if (nodes_[a.index].needs_grad) simd::kernels().axpy(1.0, g.data.data(), grad_of(a).data.data(), g.size());
      if (nodes_[b.index].needs_grad) {
        double* db = grad_of(b).data.data();
        for (std::size_t r = 0; r < R; ++r) simd::kernels().axpy(1.0, g.row(r), db, C);
      }
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  check(a), check(b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv[i];
  bool ng = a.needs_grad() || b.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, b, o] {
      const auto& g = nodes_[o.index].grad.data;
      if (nodes_[a.index].needs_grad) {
        auto& da = grad_of(a).data;
        const auto& bv = nodes_[b.index].value.data;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
      }
      if (nodes_[b.index].needs_grad) {
        auto& db = grad_of(b).data;
        const auto& av = nodes_[a.index].value.data;
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
      }
    };
  }
  return o;
}

Var Tape::scale(Var a, double c) {
  check(a);
  Tensor out = a.value();
  simd::kernels().scale(c, out.data.data(), out.size());
  bool ng = a.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, o, c] {
      const Tensor& g = nodes_[o.index].grad;
      simd::kernels().axpy(c, g.data.data(), grad_of(a).data.data(), g.size());
    };
  }
  return o;
}

Var Tape::gather(Var table, std::span<const std::uint32_t> ids) {
  check(table);
  const Tensor& T = table.value();
  const std::size_t R = T.rows(), C = T.cols();
  Tensor out({ids.size(), C});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < R, ErrorCode::IdOutOfRange,
            "gather: id " + std::to_string(ids[i]) + " >= " + std::to_string(R) + " rows");
    std::copy_n(T.row(ids[i]), C, out.row(i));
  }
  bool ng = table.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    std::vector<std::uint32_t> saved(ids.begin(), ids.end());
    nodes_[o.index].backward = [this, table, o, C, saved = std::move(saved)] {
      const Tensor& g = nodes_[o.index].grad;
      Tensor& dt = grad_of(table);
      for (std::size_t i = 0; i < saved.size(); ++i) simd::kernels().axpy(1.0, g.row(i), dt.row(saved[i]), C);
    };
  }
  return o;
}

Var Tape::concat_rows(Var a, Var b) {
  check(a), check(b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.cols(), ErrorCode::ShapeMismatch, "concat_rows: column counts differ");
  const std::size_t ra = A.rows(), rb = B.rows(), C = A.cols();
  Tensor out({ra + rb, C});
  std::copy(A.data.begin(), A.data.end(), out.data.begin());
  std::copy(B.data.begin(), B.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(A.size()));
  bool ng = a.needs_grad() || b.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, b, o, ra, C] {
      const Tensor& g = nodes_[o.index].grad;
      if (nodes_[a.index].needs_grad) simd::kernels().axpy(1.0, g.data.data(), grad_of(a).data.data(), ra * C);
      if (nodes_[b.index].needs_grad) {
        Tensor& db = grad_of(b);
        simd::kernels().axpy(1.0, g.data.data() + ra * C, db.data.data(), db.size());
      }
    };
  }
  return o;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  check(x), check(gamma), check(beta);
  const Tensor& X = x.value();
  const std::size_t R = X.rows(), C = X.cols();
  require(gamma.value().size() == C && beta.value().size() == C, ErrorCode::ShapeMismatch,
          "layer_norm: gamma/beta size must equal column count");
  Tensor out(X.shape);
  auto xhat = std::make_shared<Tensor>(X.shape);
  auto rstd = std::make_shared<std::vector<double>>(R);
  const double* g = gamma.value().data.data();
  const double* bt = beta.value().data.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = X.row(r);
    double mean = 0;
    for (std::size_t c = 0; c < C; ++c) mean += xr[c];
    mean /= double(C);
    double var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= double(C);
    double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    double* hr = xhat->row(r);
    double* yr = out.row(r);
    for (std::size_t c = 0; c < C; ++c) {
      hr[c] = (xr[c] - mean) * rs;
      yr[c] = hr[c] * g[c] + bt[c];
    }
  }
  bool ng = x.needs_grad() || gamma.needs_grad() || beta.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, x, gamma, beta, o, R, C, xhat, rstd] {
      const Tensor& dy = nodes_[o.index].grad;
      const double* g = nodes_[gamma.index].value.data.data();
      if (nodes_[gamma.index].needs_grad || nodes_[beta.index].needs_grad) {
        double* dg = nodes_[gamma.index].needs_grad ? grad_of(gamma).data.data() : nullptr;
        double* db = nodes_[beta.index].needs_grad ? grad_of(beta).data.data() : nullptr;
        for (std::size_t r = 0; r < R; ++r) {
          const double* dyr = dy.row(r);
          const double* hr = xhat->row(r);
          for (std::size_t c = 0; c < C; ++c) {
            if (dg) dg[c] += dyr[c] * hr[c];
            if (db) db[c] += dyr[c];
          }
        }
      }
      if (nodes_[x.index].needs_grad) {
        Tensor& dx = grad_of(x);
        std::vector<double> dh(C);
        for (std::size_t r = 0; r < R; ++r) {
          const double* dyr = dy.row(r);
          const double* hr = xhat->row(r);
          double m1 = 0, m2 = 0;
          for (std::size_t c = 0; c < C; ++c) {
            dh[c] = dyr[c] * g[c];
            m1 += dh[c];
            m2 += dh[c] * hr[c];
          }
          m1 /= double(C);
          m2 /= double(C);
          double* dxr = dx.row(r);
          for (std::size_t c = 0; c < C; ++c) dxr[c] += (*rstd)[r] * (dh[c] - m1 - hr[c] * m2);
        }
      }
    };
  }
  return o;
}

Var Tape::softmax(Var x) {
  check(x);
  Tensor out = x.value();
  const std::size_t R = out.rows(), C = out.cols();
  for (std::size_t r = 0; r < R; ++r) {
    double* row = out.row(r);
    double mx = *std::max_element(row, row + C);
    double s = 0;
    for (std::size_t c = 0; c < C; ++c) s += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < C; ++c) row[c] /= s;
  }
  bool ng = x.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, x, o, R, C] {
      const Tensor& y = nodes_[o.index].value;
      const Tensor& dy = nodes_[o.index].grad;
      Tensor& dx = grad_of(x);
      for (std::size_t r = 0; r < R; ++r) {
        double dot = simd::kernels().dot(dy.row(r), y.row(r), C);
        const double* yr = y.row(r);
        const double* dyr = dy.row(r);
        double* dxr = dx.row(r);
        for (std::size_t c = 0; c < C; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
      }
    };
  }
  return o;
}

Var Tape::gelu(Var x) {
  check(x);
  Tensor out = x.value();
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  bool ng = x.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, x, o] {
      const auto& xv = nodes_[x.index].value.data;
      const auto& g = nodes_[o.index].grad.data;
      auto& dx = grad_of(x).data;
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        double v = xv[i];
        double d = 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] += g[i] * d;
      }
    };
  }
  return o;
}

Var Tape::cross_entropy(Var logits, std::span<const std::int32_t> labels) {
  check(logits);
  const Tensor& Z = logits.value();
  const std::size_t R = Z.rows(), C = Z.cols();
  require(labels.size() == R, ErrorCode::ShapeMismatch, "cross_entropy: one label per row required");
  auto probs = std::make_shared<Tensor>(Z.shape);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (labels[r] < 0) continue;
    require(static_cast<std::size_t>(labels[r]) < C, ErrorCode::IdOutOfRange, "cross_entropy: label out of range");
    const double* z = Z.row(r);
    double mx = *std::max_element(z, z + C);
    double s = 0;
    double* p = probs->row(r);
    for (std::size_t c = 0; c < C; ++c) s += (p[c] = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < C; ++c) p[c] /= s;
    total += (mx + std::log(s)) - z[labels[r]];
    ++count;
  }
  double loss = count ? total / double(count) : 0.0;
  bool ng = logits.needs_grad();
  Var o = push(Tensor::scalar(loss), ng);
  if (ng && count) {
    std::vector<std::int32_t> saved(labels.begin(), labels.end());
    nodes_[o.index].backward = [this, logits, o, R, C, count, probs, saved = std::move(saved)] {
      double g = nodes_[o.index].grad.data[0] / double(count);
      Tensor& dz = grad_of(logits);
      for (std::size_t r = 0; r < R; ++r) {
        if (saved[r] < 0) continue;
        simd::kernels().axpy(g, probs->row(r), dz.row(r), C);
        dz.at(r, static_cast<std::size_t>(saved[r])) -= g;
      }
    };
  }
  return o;
}

Var Tape::l2_distance(Var a, Var b) {
  check(a), check(b);
  require_same_shape(a.value(), b.value(), "l2_distance");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out({R});
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0;
    const double* ar = A.row(r);
    const double* br = B.row(r);
    for (std::size_t c = 0; c < C; ++c) s += (ar[c] - br[c]) * (ar[c] - br[c]);
    out.data[r] = std::sqrt(s);
  }
  bool ng = a.needs_grad() || b.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, a, b, o, R, C] {
      const auto& dist = nodes_[o.index].value.data;
      const auto& g = nodes_[o.index].grad.data;
      const Tensor& A = nodes_[a.index].value;
      const Tensor& B = nodes_[b.index].value;
      double* da = nodes_[a.index].needs_grad ? grad_of(a).data.data() : nullptr;
      double* db = nodes_[b.index].needs_grad ? grad_of(b).data.data() : nullptr;
      for (std::size_t r = 0; r < R; ++r) {
        if (dist[r] == 0.0) continue;  // subgradient 0 at the kink
        double f = g[r] / dist[r];
        for (std::size_t c = 0; c < C; ++c) {
          double diff = (A.at(r, c) - B.at(r, c)) * f;
          if (da) da[r * C + c] += diff;
          if (db) db[r * C + c] -= diff;
        }
      }
    };
  }
  return o;
}

Var Tape::sum(Var x) {
  check(x);
  double s = 0;
  for (double v : x.value().data) s += v;
  bool ng = x.needs_grad();
  Var o = push(Tensor::scalar(s), ng);
  if (ng) {
    nodes_[o.index].backward = [this, x, o] {
      double g = nodes_[o.index].grad.data[0];
      for (double& v : grad_of(x).data) v += g;
    };
  }
  return o;
}

Var Tape::mean(Var x) {
  check(x);
  std::size_t n = x.value().size();
  require(n > 0, ErrorCode::ShapeMismatch, "mean of an empty tensor");
  return scale(sum(x), 1.0 / double(n));
}

Var Tape::attention(Var q, Var k, Var v, std::span<const Segment> segments, std::size_t heads, bool causal) {
  check(q), check(k), check(v);
  require_same_shape(q.value(), k.value(), "attention q/k");
  require_same_shape(q.value(), v.value(), "attention q/v");
  const std::size_t rows = q.value().rows(), d = q.value().cols();
  require(heads >= 1 && d % heads == 0, ErrorCode::ShapeMismatch, "attention: width not divisible by heads");
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(double(dh));
  std::vector<Segment> segs(segments.begin(), segments.end());
  std::vector<std::size_t> prob_offset(segs.size() + 1, 0);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    require(segs[s].offset + segs[s].length <= rows, ErrorCode::ShapeMismatch, "attention: segment out of range");
    prob_offset[s + 1] = prob_offset[s] + heads * segs[s].length * segs[s].length;
  }
  auto probs = std::make_shared<std::vector<double>>(prob_offset.back(), 0.0);
  Tensor out(q.value().shape);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  const auto& kt = simd::kernels();
  parallel_for(segs.size(), 8, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = lo; s < hi; ++s) {
      const auto [off, len] = segs[s];
      for (std::size_t h = 0; h < heads; ++h) {
        double* P = probs->data() + prob_offset[s] + h * len * len;
        for (std::size_t i = 0; i < len; ++i) {
          std::size_t span = causal ? i + 1 : len;
          double* p = P + i * len;
          double mx = -INFINITY;
          for (std::size_t j = 0; j < span; ++j) {
            p[j] = sc * kt.dot(Q.row(off + i) + h * dh, K.row(off + j) + h * dh, dh);
            mx = std::max(mx, p[j]);
          }
          double z = 0;
          for (std::size_t j = 0; j < span; ++j) z += (p[j] = std::exp(p[j] - mx));
          double* o = out.row(off + i) + h * dh;
          for (std::size_t j = 0; j < span; ++j) {
            p[j] /= z;
            kt.axpy(p[j], V.row(off + j) + h * dh, o, dh);
          }
        }
      }
    }
  });
  bool ng = q.needs_grad() || k.needs_grad() || v.needs_grad();
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.index].backward = [this, q, k, v, o, segs = std::move(segs), prob_offset = std::move(prob_offset),
                                probs, heads, dh, sc, causal] {
      const Tensor& dO = nodes_[o.index].grad;
      const Tensor& Q = nodes_[q.index].value;
      const Tensor& K = nodes_[k.index].value;
      const Tensor& V = nodes_[v.index].value;
      Tensor& dQ = grad_of(q);
      Tensor& dK = grad_of(k);
      Tensor& dV = grad_of(v);
      const auto& kt = simd::kernels();
      parallel_for(segs.size(), 8, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> dp;
        for (std::size_t s = lo; s < hi; ++s) {
          const auto [off, len] = segs[s];
          dp.resize(len);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* P = probs->data() + prob_offset[s] + h * len * len;
            for (std::size_t i = 0; i < len; ++i) {
              std::size_t span = causal ? i + 1 : len;
              const double* p = P + i * len;
              const double* doi = dO.row(off + i) + h * dh;
              double rowdot = 0;
              for (std::size_t j = 0; j < span; ++j) {
                dp[j] = kt.dot(doi, V.row(off + j) + h * dh, dh);
                rowdot += p[j] * dp[j];
                kt.axpy(p[j], doi, dV.row(off + j) + h * dh, dh);
              }
              for (std::size_t j = 0; j < span; ++j) {
                double ds = p[j] * (dp[j] - rowdot) * sc;
                if (ds == 0.0) continue;
                kt.axpy(ds, K.row(off + j) + h * dh, dQ.row(off + i) + h * dh, dh);
                kt.axpy(ds, Q.row(off + i) + h * dh, dK.row(off + j) + h * dh, dh);
              }
            }
          }
        }
      });
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  check(loss);
  require(!consumed_, ErrorCode::StaleTape, "backward already ran on this tape");
  require(loss.value().size() == 1, ErrorCode::NotScalar,
          "loss of shape " + shape_string(loss.value().shape) + " is not a scalar");
  consumed_ = true;
  if (!loss.needs_grad()) return;
  grad_of(loss).data[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.shape != n.value.shape) continue;
    if (n.backward) n.backward();
    if (n.param) {
      if (n.param->grad.shape != n.param->value.shape) n.param->zero_grad();
      simd::kernels().axpy(1.0, n.grad.data.data(), n.param->grad.data.data(), n.grad.size());
    }
  }
}

}  // namespace zett::grad
