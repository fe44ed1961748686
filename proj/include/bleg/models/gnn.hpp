#pragma once

#include <memory>
#include <span>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"
#include "bleg/models/layers.hpp"

namespace bleg::models {

using graphdata::BrainGraph;

/// D^-1/2 (A + I) D^-1/2.
Tensor normalized_adjacency(const Tensor& adjacency);

/// Several graphs stacked along the node dimension.
struct GraphBatch {
  Tensor features;  // (sum N) x d
  std::shared_ptr<const std::vector<Tensor>> propagation;
  std::vector<std::size_t> offsets;  // graph k owns rows [offsets[k], offsets[k+1])
  std::vector<int> labels;

  [[nodiscard]] std::size_t num_graphs() const { return offsets.size() - 1; }
  [[nodiscard]] std::size_t num_nodes() const { return offsets.back(); }
};

GraphBatch make_graph_batch(std::span<const BrainGraph* const> graphs);
GraphBatch make_graph_batch(const std::vector<BrainGraph>& graphs, std::span<const std::size_t> indices);

struct GnnConfig {
  std::size_t in_dim = 90;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  double dropout = 0.3;
  bool batch_norm = true;
  bool activation = true;
};

/// Graph convolution stack: per layer A_hat X W, batch norm over all nodes in
/// the batch, GeLU, dropout (train mode only).
class GnnEncoder {
 public:
  GnnEncoder(const GnnConfig& cfg, Rng& rng, const std::string& prefix = "gnn");

  [[nodiscard]] Var forward(Tape& tape, const GraphBatch& batch, Mode mode, Rng* dropout_rng) const;
  [[nodiscard]] const GnnConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }
  [[nodiscard]] const std::vector<Linear>& layers() const { return weights_; }

 private:
  GnnConfig cfg_;
  ParameterSet params_;
  std::vector<Linear> weights_;
  std::vector<BatchNorm> norms_;
};

/// Mean over each graph's nodes followed by a linear map into the LM width;
/// the result fills the GRAPH position of the LM input.
class GraphProjector {
 public:
  GraphProjector(std::size_t hidden, std::size_t lm_width, Rng& rng, const std::string& prefix = "graph_proj");
  [[nodiscard]] Var forward(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets) const;
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  Linear proj_;
};

struct AdapterConfig {
  std::size_t width = 64;
  double dropout = 0.1;
};

/// Two-layer feed-forward map H -> H with batch norm and GeLU in between.
class Adapter {
 public:
  Adapter(const AdapterConfig& cfg, Rng& rng, const std::string& prefix = "adapter");
  [[nodiscard]] Var forward(Tape& tape, Var x, Mode mode, Rng* dropout_rng) const;
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }
  [[nodiscard]] const AdapterConfig& config() const { return cfg_; }
  [[nodiscard]] Parameter& second_weight() { return *fc2_.weight; }
  [[nodiscard]] Parameter& second_bias() { return *fc2_.bias; }

 private:
  AdapterConfig cfg_;
  ParameterSet params_;
  Linear fc1_;
  BatchNorm norm_;
  Linear fc2_;
};

/// Z^G = mean over each graph's nodes of Norm(Z + X). Norm is batch
/// normalization over every node in the batch (running statistics in eval).
class Readout {
 public:
  Readout(std::size_t width, bool use_norm = true, const std::string& prefix = "readout");
  [[nodiscard]] Var forward(Tape& tape, Var adapted, Var residual, std::span<const std::size_t> offsets,
                            Mode mode) const;
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  BatchNorm norm_;
  bool use_norm_;
};

/// Linear map H -> 2.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t width, Rng& rng, const std::string& prefix = "head");
  [[nodiscard]] Var forward(Tape& tape, Var z) const { return linear_(tape, z); }
  ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  Linear linear_;
};

/// Row-wise argmax of two-class logits, ties to class 0.
std::vector<int> predict_classes(const Tensor& logits);
/// Softmax probability of class 1 per row.
std::vector<double> positive_scores(const Tensor& logits);

}  // namespace bleg::models
