#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bleg/numerics/tensor.hpp"

namespace bleg::graphdata {

using numerics::Tensor;

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct GraphMeta {
  std::string dataset;
  std::string task;

  friend bool operator==(const GraphMeta&, const GraphMeta&) = default;
};

/// One subject's connectivity graph. Node features are the full correlation
/// rows, so `node_features` doubles as the edge-weight source.
struct BrainGraph {
  std::string id;
  Tensor node_features;  // N x d
  Tensor adjacency;      // N x N, symmetric, {0,1}, zero diagonal
  std::vector<std::string> regions;
  int label = 0;
  GraphMeta meta;

  [[nodiscard]] std::size_t num_nodes() const { return regions.size(); }
  /// Edges with i < j in lexicographic order.
  [[nodiscard]] std::vector<Edge> edges() const;

  friend bool operator==(const BrainGraph&, const BrainGraph&) = default;
};

/// Throws ConsistencyError when a structural invariant does not hold.
void validate(const BrainGraph& g);

struct TimeSeriesRecord {
  std::string subject_id;
  Tensor samples;  // T x N
};

/// Name of a binary task and its two label strings (index = class).
struct TaskInfo {
  std::string name;
  std::array<std::string, 2> labels;
};

/// Known tasks: "ASD diagnosis", "ADHD diagnosis", "MDD diagnosis",
/// "Gender classification". Unknown names raise ConfigurationError.
TaskInfo task_info(const std::string& task);

/// The 90 cortical and subcortical regions of the AAL template, in atlas order.
const std::vector<std::string>& aal90_regions();
/// First n AAL names for n <= 90, generic "ROI_k" names otherwise.
std::vector<std::string> region_names(std::size_t n);

nlohmann::json to_json(const BrainGraph& g);
BrainGraph graph_from_json(const nlohmann::json& j);

}  // namespace bleg::graphdata
