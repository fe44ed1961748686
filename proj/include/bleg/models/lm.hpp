#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bleg/models/layers.hpp"
#include "bleg/models/tokenizer.hpp"

namespace bleg::models {

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_mult = 4;
  std::size_t max_len = 512;
  /// Rank of the optional low-rank update on the attention query/value
  /// projections; 0 disables it.
  std::size_t lora_rank = 0;
  double lora_alpha = 16.0;
};

/// [GRAPH | question | answer]; the answer normally ends with EOS.
struct SequenceInput {
  bool has_graph = true;
  std::vector<std::size_t> question;
  std::vector<std::size_t> answer;

  [[nodiscard]] std::size_t length() const { return (has_graph ? 1 : 0) + question.size() + answer.size(); }
  [[nodiscard]] std::vector<std::size_t> ids() const;
  /// 1 exactly on the answer positions.
  [[nodiscard]] std::vector<std::uint8_t> answer_mask() const;
};

/// Right-padded batch of sequences.
struct LmBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  bool has_graph = true;
  std::vector<std::size_t> ids;           // batch x len, PAD beyond each length
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> answer_mask;  // batch x len
};

/// Raises TruncationError when a sequence exceeds max_len (never truncates)
/// and ContractError when sequences disagree on the GRAPH slot.
LmBatch make_lm_batch(std::span<const SequenceInput> seqs, std::size_t max_len);

struct LmOutput {
  Var hidden;  // (batch*len) x width, after the final layer norm
  Var logits;  // (batch*len) x vocab; invalid when not requested
};

/// Pre-norm decoder-only transformer with learned positions and an output
/// projection tied to the token embedding table.
class ToyLm {
 public:
  ToyLm(const LmConfig& cfg, Rng& rng, const std::string& prefix = "lm");

  /// `graph_embeddings` (batch x width) fill position 0 of every sequence
  /// when the batch has a GRAPH slot.
  [[nodiscard]] LmOutput forward(Tape& tape, const LmBatch& batch, Var graph_embeddings, bool want_logits = true) const;

  /// Tied output projection for selected hidden rows.
  [[nodiscard]] Var output_logits(Tape& tape, Var hidden_rows) const;

  /// Freezes everything except the low-rank factors.
  void freeze_base_for_lora();

  [[nodiscard]] const LmConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }

 private:
  struct LowRank {
    Parameter* a = nullptr;  // width x rank
    Parameter* b = nullptr;  // rank x width, zero-initialized
  };
  struct Block {
    LayerNorm ln1;
    Linear wq, wk, wv, wo;
    LowRank lora_q, lora_v;
    LayerNorm ln2;
    Linear ff1, ff2;
  };

  [[nodiscard]] Var project(Tape& tape, Var x, const Linear& base, const LowRank& lr) const;

  LmConfig cfg_;
  ParameterSet params_;
  Parameter* tok_emb_ = nullptr;
  Parameter* pos_emb_ = nullptr;
  std::vector<Block> blocks_;
  LayerNorm ln_f_;
};

/// Greedy continuation of `prefix` until EOS or `max_new` tokens; only used
/// for smoke tests. `graph_embedding` (1 x width) fills the GRAPH slot when
/// given.
std::vector<std::size_t> greedy_decode(const ToyLm& lm, const Tensor* graph_embedding,
                                       std::vector<std::size_t> prefix, std::size_t max_new);

}  // namespace bleg::models
