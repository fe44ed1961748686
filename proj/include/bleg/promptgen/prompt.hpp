#pragma once

#include <array>
#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"

namespace bleg::promptgen {

using graphdata::BrainGraph;
using graphdata::Edge;
using numerics::Tensor;

/// Sections of the assembled prompt are joined by this separator, which no
/// section may contain.
inline constexpr const char* kSectionSeparator = "\n\n";

struct PromptBundle {
  std::string description;
  std::string graph_text;
  std::string query;
  std::string assembled;
};

/// One "Node[i]-w-Node[j]" line per edge (i < j, lexicographic order, weight
/// to 2 decimals) followed by a line with the per-node mean feature.
std::string serialize_graph(const BrainGraph& g, const Tensor& weights);
std::string serialize_graph(const BrainGraph& g);  // weights = node features

struct WeightedEdge {
  Edge edge;
  double weight = 0.0;
};

struct ParsedGraphText {
  std::vector<WeightedEdge> edges;
  std::vector<double> mean_features;
};

/// Inverse of serialize_graph (up to the 2-decimal rounding). Lines that are
/// not edge or feature lines are ignored, so this also reads whole prompts.
ParsedGraphText parse_graph_text(const std::string& text);

/// Raises ConfigurationError when the graph's task or dataset is missing.
PromptBundle build_prompt(const BrainGraph& g);

/// Splits an assembled prompt back into {description, graph_text, query}.
std::array<std::string, 3> split_prompt(const std::string& assembled);

struct PromptHeader {
  std::string dataset;
  std::string task;
  std::array<std::string, 2> labels;
  std::vector<std::string> regions;
};

/// Reads dataset, task, label strings and the region table back out of a
/// description (or an assembled prompt).
PromptHeader parse_prompt_header(const std::string& text);

}  // namespace bleg::promptgen
