#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <string>
#include <utility>
#include <vector>

#include "zett/common/rng.hpp"
#include "zett/grad/checkpoint.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::transfer {

using grad::Tensor;

enum class EmbeddingRole : std::uint8_t { Input = 0, Output = 1, Tied = 2 };

struct EmbeddingMatrix {
  Tensor values;  // [|V|, d]
  EmbeddingRole role = EmbeddingRole::Tied;

  std::size_t vocab_size() const { return values.shape.at(0); }
  std::size_t dim() const { return values.shape.at(1); }
  bool tied() const { return role == EmbeddingRole::Tied; }
};

// Throws DimensionMismatch on row/vocab disagreement, NumericFailure on
// non-finite entries.
void check_embedding(const EmbeddingMatrix& e, std::size_t vocab_size);

// A file holds one block (tied) or two (input then output).
void save_embeddings(const std::vector<EmbeddingMatrix>& blocks, const std::string& path);
std::vector<EmbeddingMatrix> load_embeddings(const std::string& path);

// Overlap rows copied byte-exactly; the rest drawn per dimension from
// Normal(column mean, column std) of phi_a.
Tensor transfer_lexical(const Tensor& phi_a, const tok::Vocabulary& va, const tok::Vocabulary& vb, Rng& rng);

// Row(t) = mean of phi_a rows over segment(t) under tok_a.
Tensor transfer_fvt(const Tensor& phi_a, const tok::TokenizerSpec& tok_a, const tok::Vocabulary& vb);

std::vector<double> sparsemax(const std::vector<double>& z);

struct AuxEmbeddings {
  std::size_t dim = 0;
  std::vector<std::string> words;
  Tensor vectors;  // [words, dim]

  std::optional<std::size_t> find(std::string_view word) const;
  void rebuild_index();
  std::size_t index_size() const { return index_.size(); }

 private:
  std::unordered_map<std::string, std::size_t, tok::StringHash, std::equal_to<>> index_;
};

// Positive PMI over tokens of tok_b co-occurring within +-window positions
// (centre included) in the encoded corpus, plus the symmetric eigendecomposition kept to the
// `dim` eigenvalues of largest magnitude. Rows are u_k * sqrt(|lambda_k|).
struct PpmiFactorization {
  std::vector<std::string> words;  // tokens that occur in the corpus, by id
  Tensor ppmi;                     // [n, n]
  Tensor vectors;                  // [n, dim]
  std::vector<double> eigenvalues;  // dim values, |.| descending

  Tensor reconstruct() const;  // vectors * diag(sign) * vectors^T
};

PpmiFactorization ppmi_factorize(const std::vector<std::string>& docs, const tok::TokenizerSpec& tok_b, std::size_t dim,
                                 std::size_t window = 5);
AuxEmbeddings train_aux_embeddings(const std::vector<std::string>& docs, const tok::TokenizerSpec& tok_b,
                                   std::size_t dim, std::size_t window = 5);

// Plain-text vectors: one "word v1 ... vd" line per word, with U+2581 in
// the word read as a space.
AuxEmbeddings load_aux_text(const std::string& path);
void save_aux_text(const AuxEmbeddings& aux, const std::string& path);

struct FocusOptions {
  std::size_t neighbors = 64;
};

struct FocusStats {
  std::size_t copied = 0;
  std::size_t combined = 0;
  std::size_t fvt_fallback = 0;
};

// Overlap rows copied; other rows a sparsemax-weighted combination of
// overlap rows by aux cosine similarity; FVT when aux lacks the token.
Tensor transfer_focus(const Tensor& phi_a, const tok::TokenizerSpec& tok_a, const tok::TokenizerSpec& tok_b,
                      const AuxEmbeddings& aux, const FocusOptions& opts = {}, FocusStats* stats = nullptr);

// theta_target_base + lambda * (theta_ft - theta_base), matched by name.
std::vector<grad::NamedTensor> task_arithmetic(const std::vector<grad::NamedTensor>& base,
                                               const std::vector<grad::NamedTensor>& ft,
                                               const std::vector<grad::NamedTensor>& target_base, double lambda);
inline const std::vector<double> kTaskArithmeticSweep = {0.0, 0.3, 0.5, 0.7};

struct Compatibility {
  double mean_row_cosine;
  double mean_vector_cosine;
};
Compatibility embedding_compatibility(const Tensor& a, const Tensor& b);

double vocab_overlap(const tok::Vocabulary& va, const tok::Vocabulary& vb);
double p_overlap(const tok::TokenizerSpec& tok_a, const tok::TokenizerSpec& tok_b, const std::vector<std::string>& docs);

}  // namespace zett::transfer
