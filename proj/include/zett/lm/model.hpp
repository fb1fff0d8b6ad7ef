#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zett/grad/tape.hpp"
#include "zett/tok/tokenizer.hpp"

namespace zett::lm {

using grad::Parameter;
using grad::Tape;
using grad::Tensor;
using grad::Var;

struct LmConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_seq_len = 128;
  bool tied_embeddings = true;
  std::size_t vocab_size = 512;

  void validate() const;  // InvalidArgument
  bool operator==(const LmConfig&) const = default;
};

std::string lm_config_to_json(const LmConfig& cfg);
LmConfig lm_config_from_json(std::string_view text);  // strict keys

struct LmBlock {
  Parameter ln1_g, ln1_b, wq, wk, wv, wo, bo;
  Parameter ln2_g, ln2_b, w1, b1, w2, b2;
};

// phi_out == phi_in (same object) when tied.
struct LmParams {
  LmConfig cfg;
  Parameter phi_in, phi_out, pos;
  std::vector<LmBlock> blocks;
  Parameter lnf_g, lnf_b;

  std::vector<Parameter> psi() const;         // everything except phi_in/phi_out
  std::vector<Parameter> embeddings() const;  // phi_in, plus phi_out when untied
  std::vector<Parameter> all() const;

  LmParams clone() const;  // deep copy, preserving tying
  void set_psi_trainable(bool trainable) const;
};

LmParams init_lm(const LmConfig& cfg, std::uint64_t seed);

// Deep copy of psi around new embedding rows; vocab_size follows `in`.
// `out` is ignored for tied models.
LmParams with_embeddings(const LmParams& p, const Tensor& in, const Tensor& out);

using Sequence = std::vector<std::uint32_t>;

// Sequences packed row-wise; each segment attends only within itself and
// positions restart at 0.
struct PackedBatch {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint32_t> positions;
  std::vector<grad::Segment> segments;
  std::vector<std::int32_t> labels;  // next id in the same sequence, -1 at each end
};

PackedBatch pack(std::span<const Sequence> seqs, std::size_t max_seq_len);  // SequenceTooLong

// Final hidden states [rows, d] given an input-embedding variable whose rows
// batch.ids index.
Var lm_hidden(Tape& tape, const LmParams& p, Var phi_in, const PackedBatch& batch);

// Mean next-token cross-entropy (nats) with logits against phi_out's rows.
Var lm_loss_var(Tape& tape, const LmParams& p, Var phi_in, Var phi_out, const PackedBatch& batch);

// Ids checked against the vocabulary (IdOutOfRange) and max_seq_len.
double lm_loss(const LmParams& p, std::span<const Sequence> seqs);

// Sequences are in full-vocabulary ids; logits are normalized over
// subset_ids only. TokenOutsideSubset if a sequence id is not in the subset.
double lm_loss_subset(const LmParams& p, std::span<const Sequence> seqs, std::span<const std::uint32_t> subset_ids);

struct SubsetRemap {
  std::vector<Sequence> seqs;  // ids rewritten to subset positions
};
SubsetRemap remap_to_subset(std::span<const Sequence> seqs, std::span<const std::uint32_t> subset_ids);

// Summed next-token NLL (nats) over all sequences with explicit embedding
// matrices; predicted-token count in *predicted.
double total_nll(const LmParams& p, const Tensor& phi_in, const Tensor& phi_out, std::span<const Sequence> seqs,
                 std::size_t* predicted = nullptr);

// Checkpoints carry the config and the tokenizer the LM was trained with.
void save_lm(const LmParams& p, const tok::TokenizerSpec& tokenizer, const std::string& path);
struct LoadedLm {
  LmParams params;
  tok::TokenizerSpec tokenizer;
};
LoadedLm load_lm(const std::string& path);

}  // namespace zett::lm
