#include "bleg/graphdata/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "bleg/error.hpp"
#include "bleg/rng.hpp"

namespace bleg::graphdata {

namespace {

std::array<std::vector<Edge>, 2> draw_planted(const SynthConfig& cfg) {
  const std::size_t k = cfg.planted_edges_per_class;
  const std::size_t n = cfg.n_nodes;
  Rng rng(derive_seed(cfg.seed, 0xB1A5ED));
  std::array<std::vector<Edge>, 2> planted;
  if (4 * k <= n) {
    // Node-disjoint pairs keep every planted correlation at the nominal level.
    std::vector<std::size_t> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = i;
    rng.shuffle(nodes);
    for (std::size_t e = 0; e < 2 * k; ++e) {
      const auto a = std::min(nodes[2 * e], nodes[2 * e + 1]);
      const auto b = std::max(nodes[2 * e], nodes[2 * e + 1]);
      planted[e / k].push_back({a, b});
    }
  } else {
    std::vector<Edge> all;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) all.push_back({i, j});
    rng.shuffle(all);
    for (std::size_t e = 0; e < 2 * k; ++e) planted[e / k].push_back(all[e]);
  }
  for (auto& set : planted) std::sort(set.begin(), set.end());
  return planted;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_graphs < 2) throw ParameterError("synthetic dataset needs at least 2 graphs");
  if (cfg.n_nodes < 2) throw ParameterError("synthetic graphs need at least 2 nodes");
  if (cfg.time_points < 3) throw ParameterError("synthetic series need at least 3 time points");
  if (!(cfg.signal_strength >= 0.0 && cfg.signal_strength < 1.0)) {
    throw ParameterError("signal_strength must lie in [0, 1)");
  }
  if (!(cfg.noise_level >= 0.0)) throw ParameterError("noise_level must be non-negative");
  kept_pair_count(cfg.n_nodes, cfg.keep_fraction);
  const std::size_t pairs = cfg.n_nodes * (cfg.n_nodes - 1) / 2;
  const bool explicit_sets = !cfg.planted[0].empty() || !cfg.planted[1].empty();
  if (!explicit_sets) {
    if (cfg.planted_edges_per_class == 0) throw ParameterError("planted_edges_per_class must be positive");
    if (2 * cfg.planted_edges_per_class > pairs) {
      throw ParameterError("planted edges (" + std::to_string(2 * cfg.planted_edges_per_class) +
                           ") exceed the number of region pairs (" + std::to_string(pairs) + ")");
    }
    return;
  }
  std::set<Edge> seen;
  for (const auto& set : cfg.planted) {
    if (set.empty()) throw ParameterError("each class needs at least one planted edge");
    for (const auto& e : set) {
      if (e.i >= e.j || e.j >= cfg.n_nodes) throw ParameterError("planted edge must satisfy i < j < n_nodes");
      if (!seen.insert(e).second) throw ParameterError("planted edge sets must be disjoint");
    }
  }
}

SyntheticDataset generate_synthetic_dataset(const SynthConfig& cfg) {
  validate(cfg);
  SyntheticDataset ds;
  ds.config = cfg;
  if (ds.config.planted[0].empty() && ds.config.planted[1].empty()) ds.config.planted = draw_planted(cfg);
  const auto& planted = ds.config.planted;
  const auto regions = region_names(cfg.n_nodes);
  const std::size_t n = cfg.n_nodes;
  const std::size_t t_len = cfg.time_points;
  const double shared = std::sqrt(cfg.signal_strength);
  const double own = std::sqrt(1.0 - cfg.signal_strength);

  for (std::size_t k = 0; k < cfg.n_graphs; ++k) {
    const int label = static_cast<int>(k % 2);
    Rng rng(derive_seed(cfg.seed, k));
    Tensor samples = Tensor::matrix(t_len, n);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t r = 0; r < n; ++r) samples(t, r) = own * rng.normal();
    for (const auto& e : planted[static_cast<std::size_t>(label)]) {
      for (std::size_t t = 0; t < t_len; ++t) {
        const double z = shared * rng.normal();
        samples(t, e.i) += z;
        samples(t, e.j) += z;
      }
    }
    // Nodes outside this class's planted set still carry unit variance.
    std::vector<int> in_planted(n, 0);
    for (const auto& e : planted[static_cast<std::size_t>(label)]) in_planted[e.i] = in_planted[e.j] = 1;
    for (std::size_t r = 0; r < n; ++r) {
      if (in_planted[r]) continue;
      for (std::size_t t = 0; t < t_len; ++t) samples(t, r) += shared * rng.normal();
    }
    if (cfg.noise_level > 0.0) {
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t r = 0; r < n; ++r) samples(t, r) += cfg.noise_level * rng.normal();
    }

    char id[32];
    std::snprintf(id, sizeof(id), "sub-%04zu", k);
    TimeSeriesRecord ts{id, std::move(samples)};
    const Tensor corr = pearson_from_timeseries(ts, regions);
    ds.graphs.push_back(build_graph(corr, cfg.keep_fraction, regions, label, {cfg.dataset, cfg.task}, id));
    ds.series.push_back(std::move(ts));
    ds.labels.push_back(label);
  }
  return ds;
}

int planted_edge_oracle(const Tensor& corr, const std::array<std::vector<Edge>, 2>& planted) {
  std::array<double, 2> score{0.0, 0.0};
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& e : planted[c]) score[c] += corr(e.i, e.j);
    if (!planted[c].empty()) score[c] /= static_cast<double>(planted[c].size());
  }
  return score[1] > score[0] ? 1 : 0;
}

}  // namespace bleg::graphdata
