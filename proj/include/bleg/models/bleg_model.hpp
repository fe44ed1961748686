#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/models/gnn.hpp"
#include "bleg/models/lm.hpp"

namespace bleg::models {

/// Question used when reading the text-side vector from the CLS position.
inline constexpr const char* kPredictionQuestion = "Give the prediction result of the input brain network.";
/// Instruction preceding the answer tokens during instruction tuning.
inline constexpr const char* kDescriptionQuestion =
    "Describe the input brain network and give the prediction result.";

struct ModelConfig {
  GnnConfig gnn;
  LmConfig lm;  // vocab_size is taken from the vocabulary
  AdapterConfig adapter;
  bool readout_norm = true;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Linear map with its own parameter set.
class Projection {
 public:
  Projection(std::size_t in, std::size_t out, Rng& rng, const std::string& name);
  [[nodiscard]] Var forward(Tape& tape, Var x) const { return linear_(tape, x); }
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  Linear linear_;
};

/// Components trained in stage 2 and frozen afterwards: GNN encoder, graph
/// projector into the LM, the LM and the CLS-to-graph-width projection.
class Backbone {
 public:
  Backbone(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  GnnEncoder& gnn() { return gnn_; }
  [[nodiscard]] const GnnEncoder& gnn() const { return gnn_; }
  GraphProjector& graph_proj() { return graph_proj_; }
  [[nodiscard]] const GraphProjector& graph_proj() const { return graph_proj_; }
  ToyLm& lm() { return lm_; }
  [[nodiscard]] const ToyLm& lm() const { return lm_; }
  Projection& text_proj() { return text_proj_; }
  [[nodiscard]] const Projection& text_proj() const { return text_proj_; }

  std::vector<ParameterSet*> sets();
  [[nodiscard]] std::vector<const ParameterSet*> sets() const;
  void set_frozen(bool frozen);

  /// Question tokens for the CLS readout sequence.
  [[nodiscard]] std::vector<std::size_t> prediction_question() const;

  /// Z^T for a batch: the LM reads [GRAPH | prediction question | CLS] with
  /// the pooled graph embedding in the GRAPH slot; the CLS hidden state is
  /// mapped to the graph width.
  [[nodiscard]] Var text_logits(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets) const;

  /// Eval-mode node embeddings and Z^T for the given graphs, without
  /// recording gradients.
  struct Encoded {
    std::vector<Tensor> node_embeddings;  // one N x H block per graph
    Tensor text_logits;                   // graphs x H
  };
  [[nodiscard]] Encoded encode(const std::vector<BrainGraph>& graphs, std::size_t chunk = 32) const;

  /// Writes backbone.ckpt, vocab.json and model.json into `dir`.
  void save(const std::filesystem::path& dir) const;
  /// Raises StateError when the directory holds no stage-2 checkpoint.
  static std::unique_ptr<Backbone> load(const std::filesystem::path& dir);

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Rng init_rng_;
  GnnEncoder gnn_;
  GraphProjector graph_proj_;
  ToyLm lm_;
  Projection text_proj_;
};

/// Components trained in stage 3: adapter, readout norm and classifier head.
class TaskHead {
 public:
  TaskHead(const ModelConfig& cfg, std::uint64_t seed);

  Adapter& adapter() { return adapter_; }
  [[nodiscard]] const Adapter& adapter() const { return adapter_; }
  Readout& readout() { return readout_; }
  [[nodiscard]] const Readout& readout() const { return readout_; }
  ClassifierHead& head() { return head_; }
  [[nodiscard]] const ClassifierHead& head() const { return head_; }

  std::vector<ParameterSet*> sets();
  [[nodiscard]] std::vector<const ParameterSet*> sets() const;

  struct Output {
    Var graph_logits;  // Z^G, graphs x H
    Var class_logits;  // graphs x 2
  };
  /// Z^G = READOUT(Norm(g(X) + X)) and the class logits.
  [[nodiscard]] Output forward(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets, Mode mode,
                               Rng* dropout_rng) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  Rng init_rng_;
  Adapter adapter_;
  Readout readout_;
  ClassifierHead head_;
};

/// 64-bit FNV-1a of a string; used to fingerprint configurations.
std::uint64_t fnv1a(const std::string& s);

}  // namespace bleg::models
