#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/models/bleg_model.hpp"
#include "bleg/training/losses.hpp"
#include "bleg/training/optimizer.hpp"

namespace bleg::training {

using graphdata::BrainGraph;
using numerics::Tensor;
using numerics::Var;

struct StageConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  double weight_decay = 0.0;
  /// Epochs without a better validation result before stopping; 0 disables.
  std::size_t patience = 0;
  std::uint64_t seed = 0;
};

struct InstructConfig {
  StageConfig stage;
  /// Weight of the coarse alignment between the CLS projection and the
  /// pooled graph embedding; 0 leaves the projection untrained.
  double align_weight = 1.0;
  /// Stop after this many optimizer steps; 0 means no limit.
  std::size_t max_steps = 0;
  /// Train only the low-rank LM factors (needs lm.lora_rank > 0).
  bool lora = false;
};

struct SftConfig {
  StageConfig stage{.epochs = 150, .batch_size = 32, .lr = 5e-4, .weight_decay = 0.0, .patience = 50, .seed = 0};
  LossConfig loss;
};

nlohmann::json to_json(const StageConfig& c);
StageConfig stage_config_from_json(const nlohmann::json& j, StageConfig defaults);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double loss = 0.0;
  double ce = 0.0;
  double align = 0.0;
  double ar = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_loss;
  /// Mean squared distances between normalized vectors on the validation
  /// set: post-adapter vs text (delta1) and pre- vs post-adapter (delta2).
  std::optional<double> delta1_sq;
  std::optional<double> delta2_sq;
};

struct TrainReport {
  std::string stage;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_accuracy;
  std::string checkpoint;

  [[nodiscard]] nlohmann::json to_json() const;
  /// One row per epoch.
  [[nodiscard]] std::string to_csv() const;
};

struct LossParts {
  Var total;
  double ar = 0.0;
  double ce = 0.0;
  double align = 0.0;
};

/// One stage-2 objective evaluation in training mode: answer-masked
/// next-token loss plus `align_weight` times the CLS alignment term.
LossParts stage2_loss(numerics::Tape& tape, const models::Backbone& model, const models::GraphBatch& graphs,
                      const models::LmBatch& text, double align_weight, Rng* dropout_rng);

/// One stage-3 objective evaluation in training mode over stacked frozen
/// node embeddings: CE(classify(Z^G), y) + alpha * alignment(Z^G, Z^T).
LossParts stage3_loss(numerics::Tape& tape, const models::TaskHead& head, const Tensor& nodes,
                      std::span<const std::size_t> offsets, const Tensor& text_logits,
                      const std::vector<std::size_t>& targets, double alpha, Rng* dropout_rng);

/// Curated stage-2 answers; entry i belongs to graph i.
struct InstructionTexts {
  /// Answers to the description question.
  std::vector<std::string> descriptions;
  /// Answers to the prediction question. These sequences end the question
  /// with CLS, so the CLS position learns to start the answer. May be empty.
  std::vector<std::string> predictions;
};

/// Stage 2: answer-masked next-token loss on [GRAPH | question | answer]
/// with GNN, graph projection, LM and CLS projection trainable. Batches are
/// drawn over all (graph, question) samples.
TrainReport instruction_tune(models::Backbone& model, const std::vector<BrainGraph>& graphs,
                             const InstructionTexts& texts, const InstructConfig& cfg);

/// Frozen stage-2 outputs for every graph, computed once in eval mode.
struct SftData {
  std::vector<Tensor> node_embeddings;
  Tensor text_logits;
  std::vector<int> labels;
};

SftData make_sft_data(const models::Backbone& model, const std::vector<BrainGraph>& graphs);

/// Stage 3: CE(classify(Z^G), y) + alpha * alignment(Z^G, Z^T) with only the
/// task head trainable. Early stopping on validation accuracy (ties go to the
/// lower validation loss); the best epoch's weights are left in `head`.
/// `backbone`, when given, is frozen and checked to stay untouched.
TrainReport sft(models::TaskHead& head, const SftData& data, std::span<const std::size_t> train,
                std::span<const std::size_t> val, const SftConfig& cfg, models::Backbone* backbone = nullptr);

/// Class logits, Z^G and pre-adapter pooled embeddings of `indices` in eval mode.
struct HeadEval {
  Tensor class_logits;
  Tensor graph_logits;
  Tensor pooled;
};
HeadEval evaluate_head(const models::TaskHead& head, const SftData& data, std::span<const std::size_t> indices);

/// Plain GCN + mean pooling + linear head trained end to end with CE only;
/// the baseline row of the ablation.
struct GnnBaseline {
  GnnBaseline(const models::GnnConfig& cfg, std::uint64_t seed);
  Rng init_rng;
  models::GnnEncoder gnn;
  models::ClassifierHead head;
  std::vector<numerics::ParameterSet*> sets() { return {&gnn.params(), &head.params()}; }
  [[nodiscard]] Tensor logits(const std::vector<BrainGraph>& graphs, std::span<const std::size_t> indices) const;
};

TrainReport train_gnn_baseline(GnnBaseline& model, const std::vector<BrainGraph>& graphs,
                               std::span<const std::size_t> train, std::span<const std::size_t> val,
                               const StageConfig& cfg);

/// Raises InvariantViolation when a parameter that may not be trained holds
/// a nonzero gradient.
void check_frozen_untouched(std::span<numerics::ParameterSet* const> sets);

}  // namespace bleg::training
