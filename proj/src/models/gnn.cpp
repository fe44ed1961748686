#include "bleg/models/gnn.hpp"

#include <cmath>

#include "bleg/error.hpp"

namespace bleg::models {

Tensor normalized_adjacency(const Tensor& adjacency) {
  const std::size_t n = adjacency.rows();
  if (adjacency.rank() != 2 || adjacency.cols() != n) throw DimensionError("adjacency must be square");
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) deg += adjacency(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = i == j ? 1.0 : adjacency(i, j);
      if (a != 0.0) out(i, j) = a * inv_sqrt[i] * inv_sqrt[j];
    }
  return out;
}

GraphBatch make_graph_batch(std::span<const BrainGraph* const> graphs) {
  if (graphs.empty()) throw DimensionError("graph batch needs at least one graph");
  const std::size_t d = graphs[0]->node_features.cols();
  GraphBatch b;
  auto blocks = std::make_shared<std::vector<Tensor>>();
  b.offsets.push_back(0);
  std::vector<double> data;
  for (const auto* g : graphs) {
    if (g->node_features.cols() != d) throw DimensionError("graphs in a batch must share the feature width");
    data.insert(data.end(), g->node_features.data().begin(), g->node_features.data().end());
    blocks->push_back(normalized_adjacency(g->adjacency));
    b.offsets.push_back(b.offsets.back() + g->num_nodes());
    b.labels.push_back(g->label);
  }
  b.features = Tensor({b.offsets.back(), d}, std::move(data));
  b.propagation = std::move(blocks);
  return b;
}

GraphBatch make_graph_batch(const std::vector<BrainGraph>& graphs, std::span<const std::size_t> indices) {
  std::vector<const BrainGraph*> ptrs;
  for (auto k : indices) ptrs.push_back(&graphs.at(k));
  return make_graph_batch(ptrs);
}

GnnEncoder::GnnEncoder(const GnnConfig& cfg, Rng& rng, const std::string& prefix) : cfg_(cfg) {
  if (cfg.layers == 0) throw ConfigurationError("GNN needs at least one layer");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigurationError("GNN dropout must lie in [0, 1)");
  std::size_t in = cfg.in_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    weights_.push_back(Linear::create(params_, name, in, cfg.hidden, rng, false));
    if (cfg.batch_norm) norms_.push_back(BatchNorm::create(params_, name + ".bn", cfg.hidden));
    in = cfg.hidden;
  }
}

Var GnnEncoder::forward(Tape& tape, const GraphBatch& batch, Mode mode, Rng* dropout_rng) const {
  if (batch.features.cols() != cfg_.in_dim) {
    throw DimensionError("GNN expects " + std::to_string(cfg_.in_dim) + " input features, got " +
                         std::to_string(batch.features.cols()));
  }
  Var x = tape.constant(batch.features);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = numerics::block_propagate(weights_[l](tape, x), batch.propagation, batch.offsets);
    if (cfg_.batch_norm) x = norms_[l](tape, x, mode);
    if (cfg_.activation) x = numerics::gelu(x);
    x = numerics::dropout(x, cfg_.dropout, dropout_rng, mode);
  }
  return x;
}

GraphProjector::GraphProjector(std::size_t hidden, std::size_t lm_width, Rng& rng, const std::string& prefix)
    : proj_(Linear::create(params_, prefix, hidden, lm_width, rng)) {}

Var GraphProjector::forward(Tape& tape, Var node_embeddings, std::span<const std::size_t> offsets) const {
  return proj_(tape, numerics::segment_mean_rows(node_embeddings, offsets));
}

Adapter::Adapter(const AdapterConfig& cfg, Rng& rng, const std::string& prefix)
    : cfg_(cfg),
      fc1_(Linear::create(params_, prefix + ".fc1", cfg.width, cfg.width, rng)),
      norm_(BatchNorm::create(params_, prefix + ".bn", cfg.width)),
      fc2_(Linear::create(params_, prefix + ".fc2", cfg.width, cfg.width, rng)) {
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigurationError("adapter dropout must lie in [0, 1)");
}

Var Adapter::forward(Tape& tape, Var x, Mode mode, Rng* dropout_rng) const {
  Var h = numerics::gelu(norm_(tape, fc1_(tape, x), mode));
  h = numerics::dropout(h, cfg_.dropout, dropout_rng, mode);
  return fc2_(tape, h);
}

Readout::Readout(std::size_t width, bool use_norm, const std::string& prefix)
    : norm_(BatchNorm::create(params_, prefix + ".bn", width)), use_norm_(use_norm) {}

Var Readout::forward(Tape& tape, Var adapted, Var residual, std::span<const std::size_t> offsets, Mode mode) const {
  if (adapted.rows() != residual.rows() || adapted.cols() != residual.cols()) {
    throw DimensionError("readout: adapter output and residual shapes differ");
  }
  Var s = numerics::add(adapted, residual);
  if (use_norm_) s = norm_(tape, s, mode);
  return numerics::segment_mean_rows(s, offsets);
}

ClassifierHead::ClassifierHead(std::size_t width, Rng& rng, const std::string& prefix)
    : linear_(Linear::create(params_, prefix, width, 2, rng)) {}

std::vector<int> predict_classes(const Tensor& logits) {
  std::vector<int> out;
  for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(logits(r, 1) > logits(r, 0) ? 1 : 0);
  return out;
}

std::vector<double> positive_scores(const Tensor& logits) {
  std::vector<double> out;
  for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(1.0 / (1.0 + std::exp(logits(r, 0) - logits(r, 1))));
  return out;
}

}  // namespace bleg::models
