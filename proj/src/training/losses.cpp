#include "bleg/training/losses.hpp"

#include "bleg/error.hpp"

namespace bleg::training {

using namespace numerics;

AnswerTargets answer_targets(const models::LmBatch& batch) {
  AnswerTargets out;
  std::vector<std::size_t> per_seq;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < batch.len; ++t) {
      const std::size_t k = b * batch.len + t;
      if (!batch.answer_mask[k]) continue;
      if (t == 0) throw ContractError("an answer token at position 0 has no preceding logits");
      out.rows.push_back(k - 1);
      out.targets.push_back(batch.ids[k]);
      ++count;
    }
    if (count > 0) per_seq.push_back(count);
  }
  if (out.rows.empty()) throw ContractError("answer mask is empty");
  const double n_seq = static_cast<double>(per_seq.size());
  for (auto c : per_seq) out.weights.insert(out.weights.end(), c, 1.0 / (n_seq * static_cast<double>(c)));
  return out;
}

Var autoregressive_loss(Var logits, const models::LmBatch& batch) {
  if (logits.rows() != batch.batch * batch.len) throw DimensionError("logits must hold one row per position");
  const AnswerTargets at = answer_targets(batch);
  std::vector<std::size_t> targets(logits.rows(), 0);
  std::vector<double> weights(logits.rows(), 0.0);
  for (std::size_t k = 0; k < at.rows.size(); ++k) {
    targets[at.rows[k]] = at.targets[k];
    weights[at.rows[k]] = at.weights[k];
  }
  return softmax_cross_entropy(logits, targets, weights);
}

Var autoregressive_loss_rows(Var answer_logits, const AnswerTargets& at) {
  if (at.targets.empty()) throw ContractError("answer mask is empty");
  if (answer_logits.rows() != at.targets.size()) throw DimensionError("one logit row per answer token is required");
  return softmax_cross_entropy(answer_logits, at.targets, at.weights);
}

Var alignment_loss(Var zg, Var zt) {
  if (zg.rows() != zt.rows() || zg.cols() != zt.cols()) throw DimensionError("alignment operands differ in shape");
  if (zg.rows() == 0) throw DimensionError("alignment loss needs at least one pair");
  for (const Var* v : {&zg, &zt}) {
    const Tensor& t = v->value();
    if (!t.all_finite()) throw NumericalError("non-finite logit vector in the alignment loss");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      bool zero = true;
      for (double x : t.row_span(r)) zero = zero && x == 0.0;
      if (zero) throw DegenerateInputError("all-zero logit vector in row " + std::to_string(r) + " of the alignment loss");
    }
  }
  const Var d = sub(l2_normalize_rows(zg), l2_normalize_rows(zt));
  return scale(sum_squares(d), 1.0 / static_cast<double>(zg.rows()));
}

void validate(const LossConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha < 1.0)) throw ConfigurationError("alpha must lie in [0, 1)");
}

}  // namespace bleg::training
