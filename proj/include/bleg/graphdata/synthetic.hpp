#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"
#include "bleg/graphdata/connectivity.hpp"

namespace bleg::graphdata {

/// Planted-signal generator settings. Each class owns a set of region pairs
/// whose series share a latent component; the two sets are disjoint.
struct SynthConfig {
  std::size_t n_graphs = 200;
  std::size_t n_nodes = 90;
  std::size_t time_points = 100;
  /// Used when `planted` is empty: this many pairs are drawn per class.
  std::size_t planted_edges_per_class = 5;
  std::array<std::vector<Edge>, 2> planted;
  /// Shared-variance fraction on planted pairs, in [0, 1). Zero makes the
  /// classes distributionally identical.
  double signal_strength = 0.9;
  /// Standard deviation of independent observation noise.
  double noise_level = 0.1;
  double keep_fraction = kDefaultKeepFraction;
  std::uint64_t seed = 0;
  std::string dataset = "synthetic";
  std::string task = "ASD diagnosis";
};

struct SyntheticDataset {
  SynthConfig config;  // with `planted` resolved
  std::vector<TimeSeriesRecord> series;
  std::vector<int> labels;
  std::vector<BrainGraph> graphs;
};

/// Raises ParameterError for an impossible configuration (too many planted
/// pairs, overlapping class sets, signal outside [0, 1), ...).
void validate(const SynthConfig& cfg);

/// Class-balanced (labels alternate 0, 1, ...), deterministic given the seed;
/// graph k uses the derived seed derive_seed(seed, k).
SyntheticDataset generate_synthetic_dataset(const SynthConfig& cfg);

/// Mean correlation over each class's planted pairs; predicts the class
/// with the larger mean (ties to class 0).
int planted_edge_oracle(const Tensor& corr, const std::array<std::vector<Edge>, 2>& planted);

}  // namespace bleg::graphdata
