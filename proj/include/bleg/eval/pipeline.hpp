#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bleg/eval/protocol.hpp"
#include "bleg/training/trainer.hpp"

namespace bleg::eval {

struct PipelineConfig {
  models::ModelConfig model;
  training::InstructConfig tune;
  training::SftConfig sft;
  /// GNN-only baseline schedule.
  training::StageConfig baseline{.epochs = 150, .batch_size = 32, .lr = 5e-4, .weight_decay = 0.0, .patience = 50,
                                 .seed = 0};
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

using Logger = std::function<void(const std::string&)>;

/// Predictions and class-1 probabilities of a trained head on `test`.
FoldOutput predict(const models::TaskHead& head, const training::SftData& data, std::span<const std::size_t> test);

/// Stage 3 on each fold over fixed stage-2 outputs. The head seed and the
/// batch order are derived from the fold seed.
FoldFn sft_fold_fn(const models::ModelConfig& model, const training::SftData& data, const training::SftConfig& cfg);

/// The backbone's GNN, graph projection and CLS projection on top of a
/// freshly initialized LM.
std::unique_ptr<models::Backbone> with_untrained_lm(const models::Backbone& tuned, std::uint64_t seed);

struct AblationRows {
  bool full = true;
  bool no_align = true;
  bool untuned_lm = true;
  bool gnn_only = true;
};

struct AblationTable {
  std::vector<std::string> names;
  std::vector<MetricsReport> reports;

  [[nodiscard]] nlohmann::json to_json() const;
  /// row, metric mean and std columns.
  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] const MetricsReport& at(const std::string& name) const;
};

/// Per fold: instruction tuning on the training graphs only, then each
/// enabled row on the same split and head seed. `texts` holds one entry per
/// graph.
AblationTable run_ablations(const std::vector<graphdata::BrainGraph>& graphs, const training::InstructionTexts& texts,
                            const models::Vocabulary& vocab, const PipelineConfig& cfg, const Protocol& protocol,
                            const AblationRows& rows = {}, const Logger& log = {});

}  // namespace bleg::eval
