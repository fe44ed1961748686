#pragma once

#include <vector>

#include "bleg/models/lm.hpp"

namespace bleg::training {

using numerics::Var;

/// Logit rows that predict answer tokens: row b*L+t-1 predicts the token at
/// b*L+t for every answer position t. `weights` averages over the answer
/// tokens of each sequence, then over the sequences that have any.
struct AnswerTargets {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
  std::vector<double> weights;
};

/// Raises ContractError when the batch has no answer position or an answer
/// starts at position 0 (nothing precedes it).
AnswerTargets answer_targets(const models::LmBatch& batch);

/// Next-token cross-entropy averaged over each sequence's answer positions,
/// then over sequences; `logits` holds every position (batch*len rows).
/// Other positions add exactly nothing.
Var autoregressive_loss(Var logits, const models::LmBatch& batch);

/// Same loss from logits already gathered at AnswerTargets::rows.
Var autoregressive_loss_rows(Var answer_logits, const AnswerTargets& at);

/// (1/N) sum_i || zg_i/||zg_i|| - zt_i/||zt_i|| ||^2, in [0, 4]. A zero row
/// raises DegenerateInputError.
Var alignment_loss(Var zg, Var zt);

struct LossConfig {
  /// Weight of the alignment term. 0 switches it off (ablation).
  double alpha = 0.4;
};

/// Raises ConfigurationError unless 0 <= alpha < 1.
void validate(const LossConfig& c);

/// Sweep list for the alignment weight.
inline const std::vector<double> kAlphaSweep{0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

}  // namespace bleg::training
