#include "zett/transfer/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "zett/common/error.hpp"
#include "zett/common/parallel.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::transfer {

void check_embedding(const EmbeddingMatrix& e, std::size_t vocab_size) {
  require(e.values.shape.size() == 2 && e.values.shape[0] == vocab_size, ErrorCode::DimensionMismatch,
          "embedding rows " + grad::shape_string(e.values.shape) + " do not match vocab size " +
              std::to_string(vocab_size));
  for (double v : e.values.data) require(std::isfinite(v), ErrorCode::NumericFailure, "non-finite embedding entry");
}

void save_embeddings(const std::vector<EmbeddingMatrix>& blocks, const std::string& path) {
  require(blocks.size() == 1 || blocks.size() == 2, ErrorCode::InvalidArgument, "one or two embedding blocks expected");
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorCode::Io, "cannot write " + path);
  for (const auto& b : blocks) grad::write_matrix_block(out, b.values, static_cast<std::uint8_t>(b.role));
  require(bool(out), ErrorCode::Io, "write failed: " + path);
}

std::vector<EmbeddingMatrix> load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::Io, "cannot read " + path);
  std::vector<EmbeddingMatrix> out;
  while (in.peek() != EOF) {
    std::uint8_t role = 0;
    Tensor t = grad::read_matrix_block(in, &role);
    out.push_back({std::move(t), static_cast<EmbeddingRole>(role)});
  }
  require(!out.empty(), ErrorCode::InvalidFormat, path + ": no embedding block");
  return out;
}

namespace {

double norm_sq(const double* x, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void require_matrix(const Tensor& t, const char* what) {
  require(t.shape.size() == 2, ErrorCode::DimensionMismatch, std::string(what) + " must be a matrix");
}

}  // namespace

Tensor transfer_lexical(const Tensor& phi_a, const tok::Vocabulary& va, const tok::Vocabulary& vb, Rng& rng) {
  require_matrix(phi_a, "phi_a");
  require(phi_a.shape[0] == va.size(), ErrorCode::DimensionMismatch, "phi_a rows != |V_a|");
  const std::size_t d = phi_a.cols(), n = phi_a.rows();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += phi_a.at(r, c) / double(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) sd[c] += std::pow(phi_a.at(r, c) - mean[c], 2) / double(n);
  for (double& s : sd) s = std::sqrt(s);
  Tensor out({vb.size(), d});
  for (std::size_t i = 0; i < vb.size(); ++i) {
    if (auto id = va.find(vb.token(tok::TokenId(i)))) {
      std::copy_n(phi_a.row(*id), d, out.row(i));
    } else {
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) = mean[c] + sd[c] * rng.normal();
    }
  }
  return out;
}

Tensor transfer_fvt(const Tensor& phi_a, const tok::TokenizerSpec& tok_a, const tok::Vocabulary& vb) {
  require_matrix(phi_a, "phi_a");
  require(phi_a.shape[0] == tok_a.vocab().size(), ErrorCode::DimensionMismatch, "phi_a rows != |V_a|");
  const std::size_t d = phi_a.cols();
  Tensor out({vb.size(), d});
  parallel_for(vb.size(), 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto ids = tok::segment(vb.token(tok::TokenId(i)), tok_a);
      double* row = out.row(i);
      for (auto id : ids)
        for (std::size_t c = 0; c < d; ++c) row[c] += phi_a.at(id, c);
      for (std::size_t c = 0; c < d; ++c) row[c] /= double(ids.size());
    }
  });
  return out;
}

std::vector<double> sparsemax(const std::vector<double>& z) {
  require(!z.empty(), ErrorCode::InvalidArgument, "sparsemax of an empty vector");
  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0, tau = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumsum += sorted[k];
    if (1.0 + double(k + 1) * sorted[k] > cumsum) tau = (cumsum - 1.0) / double(k + 1);
    else break;
  }
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(0.0, z[i] - tau);
  return p;
}

std::optional<std::size_t> AuxEmbeddings::find(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void AuxEmbeddings::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < words.size(); ++i) index_.emplace(words[i], i);
}

Tensor PpmiFactorization::reconstruct() const {
  const std::size_t n = words.size(), k = eigenvalues.size();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) s += vectors.at(i, c) * vectors.at(j, c) * (eigenvalues[c] < 0 ? -1.0 : 1.0);
      out.at(i, j) = s;
    }
  return out;
}

PpmiFactorization ppmi_factorize(const std::vector<std::string>& docs, const tok::TokenizerSpec& tok_b, std::size_t dim,
                                 std::size_t window) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "aux embeddings need a corpus");
  require(dim >= 1, ErrorCode::InvalidArgument, "aux dimension must be >= 1");
  tok::CachedEncoder enc(tok_b);
  std::vector<std::vector<tok::TokenId>> encoded;
  std::vector<std::int64_t> dense(tok_b.vocab().size(), -1);
  PpmiFactorization f;
  for (const auto& doc : docs) {
    encoded.push_back(enc.encode(doc));
    for (auto id : encoded.back())
      if (dense[id] < 0) {
        dense[id] = std::int64_t(f.words.size());
        f.words.push_back(tok_b.vocab().token(id));
      }
  }
  const std::size_t n = f.words.size();
  require(n > 0, ErrorCode::EmptyCorpus, "corpus encodes to no tokens");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  for (const auto& ids : encoded)
    for (std::size_t i = 0; i < ids.size(); ++i) {
      counts(dense[ids[i]], dense[ids[i]]) += 1;  // the window includes its centre
      for (std::size_t j = i + 1; j < ids.size() && j <= i + window; ++j) {
        auto a = dense[ids[i]], b = dense[ids[j]];
        counts(a, b) += 1;
        counts(b, a) += 1;
      }
    }
  Eigen::VectorXd row = counts.rowwise().sum();
  double total = row.sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  for (Eigen::Index i = 0; i < Eigen::Index(n); ++i)
    for (Eigen::Index j = 0; j < Eigen::Index(n); ++j)
      if (counts(i, j) > 0) ppmi(i, j) = std::max(0.0, std::log(counts(i, j) * total / (row(i) * row(j))));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(ppmi);
  require(solver.info() == Eigen::Success, ErrorCode::NumericFailure, "PPMI eigendecomposition failed");
  const Eigen::VectorXd& evals = solver.eigenvalues();
  const Eigen::MatrixXd& evecs = solver.eigenvectors();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(evals(a)) > std::abs(evals(b)); });
  const std::size_t k = std::min(dim, n);
  f.ppmi = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) f.ppmi.at(i, j) = ppmi(Eigen::Index(i), Eigen::Index(j));
  f.vectors = Tensor({n, dim});
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::Index e = order[c];
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < Eigen::Index(n); ++i)
      if (std::abs(evecs(i, e)) > std::abs(evecs(pivot, e))) pivot = i;
    double sign = evecs(pivot, e) < 0 ? -1.0 : 1.0;
    double s = std::sqrt(std::abs(evals(e)));
    for (std::size_t i = 0; i < n; ++i) f.vectors.at(i, c) = sign * evecs(Eigen::Index(i), e) * s;
    f.eigenvalues.push_back(evals(e));
  }
  return f;
}

AuxEmbeddings train_aux_embeddings(const std::vector<std::string>& docs, const tok::TokenizerSpec& tok_b,
                                   std::size_t dim, std::size_t window) {
  PpmiFactorization f = ppmi_factorize(docs, tok_b, dim, window);
  AuxEmbeddings aux;
  aux.dim = dim;
  aux.words = std::move(f.words);
  aux.vectors = std::move(f.vectors);
  aux.rebuild_index();
  return aux;
}

namespace {

const std::string kSpaceMark = "\xE2\x96\x81";  // U+2581

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

AuxEmbeddings load_aux_text(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::Io, "cannot read " + path);
  AuxEmbeddings aux;
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    require(ls.eof(), ErrorCode::InvalidFormat, path + ":" + std::to_string(lineno) + ": bad number");
    if (aux.words.empty()) aux.dim = v.size();
    require(v.size() == aux.dim && aux.dim > 0, ErrorCode::InvalidFormat,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(aux.dim) + " values");
    for (double x : v) require(std::isfinite(x), ErrorCode::InvalidFormat, path + ": non-finite value");
    aux.words.push_back(replace_all(word, kSpaceMark, " "));
    values.insert(values.end(), v.begin(), v.end());
  }
  require(!aux.words.empty(), ErrorCode::InvalidFormat, path + ": no vectors");
  aux.vectors = Tensor({aux.words.size(), aux.dim}, std::move(values));
  aux.rebuild_index();
  require(aux.index_size() == aux.words.size(), ErrorCode::InvalidFormat, path + ": duplicate words");
  return aux;
}

void save_aux_text(const AuxEmbeddings& aux, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::Io, "cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < aux.words.size(); ++i) {
    require(aux.words[i].find_first_of("\t\n\r") == std::string::npos, ErrorCode::InvalidArgument,
            "word contains a tab or newline");
    out << replace_all(aux.words[i], " ", kSpaceMark);
    for (std::size_t c = 0; c < aux.dim; ++c) out << ' ' << aux.vectors.at(i, c);
    out << '\n';
  }
}

Tensor transfer_focus(const Tensor& phi_a, const tok::TokenizerSpec& tok_a, const tok::TokenizerSpec& tok_b,
                      const AuxEmbeddings& aux, const FocusOptions& opts, FocusStats* stats) {
  require_matrix(phi_a, "phi_a");
  const tok::Vocabulary& va = tok_a.vocab();
  const tok::Vocabulary& vb = tok_b.vocab();
  require(phi_a.shape[0] == va.size(), ErrorCode::DimensionMismatch, "phi_a rows != |V_a|");
  require(opts.neighbors >= 1, ErrorCode::InvalidArgument, "FOCUS needs at least one neighbor");
  const std::size_t d = phi_a.cols();

  struct Anchor {
    tok::TokenId a_id;
    std::size_t aux_row;
    double norm;
  };
  std::vector<Anchor> anchors;
  std::vector<std::optional<tok::TokenId>> overlap(vb.size());
  for (std::size_t i = 0; i < vb.size(); ++i) {
    overlap[i] = va.find(vb.token(tok::TokenId(i)));
    if (!overlap[i]) continue;
    if (auto r = aux.find(vb.token(tok::TokenId(i)))) {
      double norm = std::sqrt(norm_sq(aux.vectors.row(*r), aux.dim));
      if (norm > 0) anchors.push_back({*overlap[i], *r, norm});
    }
  }
  require(std::any_of(overlap.begin(), overlap.end(), [](const auto& o) { return o.has_value(); }),
          ErrorCode::EmptyOverlap, "no token shared between the vocabularies");

  Tensor out({vb.size(), d});
  FocusStats st;
  std::vector<std::size_t> need_fvt;
  for (std::size_t i = 0; i < vb.size(); ++i) {
    if (overlap[i]) {
      std::copy_n(phi_a.row(*overlap[i]), d, out.row(i));
      ++st.copied;
      continue;
    }
    auto r = aux.find(vb.token(tok::TokenId(i)));
    double norm = r ? std::sqrt(norm_sq(aux.vectors.row(*r), aux.dim)) : 0.0;
    if (!r || norm == 0 || anchors.empty()) {
      need_fvt.push_back(i);
      continue;
    }
    std::vector<std::pair<double, std::size_t>> sims(anchors.size());
    for (std::size_t k = 0; k < anchors.size(); ++k) {
      double dot = 0;
      const double* x = aux.vectors.row(*r);
      const double* y = aux.vectors.row(anchors[k].aux_row);
      for (std::size_t c = 0; c < aux.dim; ++c) dot += x[c] * y[c];
      sims[k] = {dot / (norm * anchors[k].norm), k};
    }
    std::size_t keep = std::min(opts.neighbors, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + std::ptrdiff_t(keep), sims.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<double> z(keep);
    for (std::size_t k = 0; k < keep; ++k) z[k] = sims[k].first;
    auto w = sparsemax(z);
    double* row = out.row(i);
    for (std::size_t k = 0; k < keep; ++k)
      if (w[k] > 0)
        for (std::size_t c = 0; c < d; ++c) row[c] += w[k] * phi_a.at(anchors[sims[k].second].a_id, c);
    ++st.combined;
  }
  if (!need_fvt.empty()) {
    std::vector<std::string> words;
    for (auto i : need_fvt) words.push_back(vb.token(tok::TokenId(i)));
    Tensor fvt = transfer_fvt(phi_a, tok_a, tok::Vocabulary(words));
    for (std::size_t k = 0; k < need_fvt.size(); ++k) std::copy_n(fvt.row(k), d, out.row(need_fvt[k]));
    st.fvt_fallback = need_fvt.size();
  }
  if (stats) *stats = st;
  return out;
}

std::vector<grad::NamedTensor> task_arithmetic(const std::vector<grad::NamedTensor>& base,
                                               const std::vector<grad::NamedTensor>& ft,
                                               const std::vector<grad::NamedTensor>& target_base, double lambda) {
  require(base.size() == ft.size() && base.size() == target_base.size(), ErrorCode::ShapeMismatch,
          "parameter sets differ in size");
  auto find = [](const std::vector<grad::NamedTensor>& set, const std::string& name) -> const Tensor& {
    for (const auto& t : set)
      if (t.name == name) return t.value;
    fail(ErrorCode::ShapeMismatch, "parameter '" + name + "' missing");
  };
  std::vector<grad::NamedTensor> out;
  for (const auto& tb : target_base) {
    const Tensor& b = find(base, tb.name);
    const Tensor& f = find(ft, tb.name);
    require(b.shape == tb.value.shape && f.shape == tb.value.shape, ErrorCode::ShapeMismatch,
            "shape mismatch for '" + tb.name + "'");
    grad::NamedTensor r{tb.name, tb.value};
    if (lambda != 0.0) {
      // (t - l*b) + l*f: exact at l = 1 when t == b
      for (std::size_t i = 0; i < r.value.size(); ++i)
        r.value.data[i] = (tb.value.data[i] - lambda * b.data[i]) + lambda * f.data[i];
    }
    out.push_back(std::move(r));
  }
  return out;
}

Compatibility embedding_compatibility(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape && a.shape.size() == 2 && a.rows() > 0, ErrorCode::ShapeMismatch,
          "compatibility needs equal-shaped non-empty matrices");
  auto cosine = [](const double* x, const double* y, std::size_t n) {
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i < n; ++i) xy += x[i] * y[i], xx += x[i] * x[i], yy += y[i] * y[i];
    return xx == 0 || yy == 0 ? 0.0 : xy / std::sqrt(xx * yy);
  };
  const std::size_t n = a.rows(), d = a.cols();
  double row_sum = 0;
  std::vector<double> ma(d, 0.0), mb(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    row_sum += cosine(a.row(r), b.row(r), d);
    for (std::size_t c = 0; c < d; ++c) ma[c] += a.at(r, c) / double(n), mb[c] += b.at(r, c) / double(n);
  }
  return {row_sum / double(n), cosine(ma.data(), mb.data(), d)};
}

double vocab_overlap(const tok::Vocabulary& va, const tok::Vocabulary& vb) {
  require(vb.size() > 0, ErrorCode::InvalidArgument, "empty target vocabulary");
  std::size_t shared = 0;
  for (const auto& t : vb.tokens()) shared += va.contains(t);
  return double(shared) / double(vb.size());
}

double p_overlap(const tok::TokenizerSpec& tok_a, const tok::TokenizerSpec& tok_b, const std::vector<std::string>& docs) {
  require(!docs.empty(), ErrorCode::EmptyCorpus, "p_overlap needs a corpus");
  tok::CachedEncoder enc(tok_b);
  std::vector<std::uint64_t> freq(tok_b.vocab().size(), 0);
  std::uint64_t total = 0;
  for (const auto& doc : docs)
    for (auto id : enc.encode(doc)) ++freq[id], ++total;
  require(total > 0, ErrorCode::EmptyCorpus, "corpus encodes to no tokens");
  std::uint64_t hit = 0;
  for (std::size_t i = 0; i < freq.size(); ++i)
    if (freq[i] && tok_a.vocab().contains(tok_b.vocab().token(tok::TokenId(i)))) hit += freq[i];
  return double(hit) / double(total);
}

}  // namespace zett::transfer
