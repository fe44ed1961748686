#include "bleg/graphdata/connectivity.hpp"

#include <algorithm>
#include <cmath>

#include "bleg/error.hpp"

namespace bleg::graphdata {

Tensor pearson_from_timeseries(const TimeSeriesRecord& ts, const std::vector<std::string>& regions) {
  const Tensor& x = ts.samples;
  if (x.rank() != 2) throw DimensionError("time series must be a T x N matrix");
  const std::size_t t = x.rows();
  const std::size_t n = x.cols();
  if (t < 3) throw DegenerateSeriesError("time series needs at least 3 time points, got " + std::to_string(t));

  std::vector<double> centered(t * n);
  std::vector<double> norms(n);
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < t; ++r) mean += x(r, c);
    mean /= static_cast<double>(t);
    double sq = 0.0;
    for (std::size_t r = 0; r < t; ++r) {
      const double v = x(r, c) - mean;
      centered[c * t + r] = v;
      sq += v * v;
    }
    if (sq == 0.0) {
      const std::string name = c < regions.size() ? regions[c] : "region " + std::to_string(c);
      throw DegenerateSeriesError("constant time series for " + name + " in subject '" + ts.subject_id + "'");
    }
    norms[c] = std::sqrt(sq);
  }

  Tensor corr = Tensor::matrix(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    corr(a, a) = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      double dot = 0.0;
      for (std::size_t r = 0; r < t; ++r) dot += centered[a * t + r] * centered[b * t + r];
      const double v = std::clamp(dot / (norms[a] * norms[b]), -1.0, 1.0);
      corr(a, b) = v;
      corr(b, a) = v;
    }
  }
  return corr;
}

std::size_t kept_pair_count(std::size_t n, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ParameterError("keep_fraction must lie in (0, 1], got " + std::to_string(keep_fraction));
  }
  const std::size_t pairs = n * (n - 1) / 2;
  // The 1e-9 slack keeps products like 0.2 * 4005 from rounding up past an integer.
  const auto kept = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(pairs) - 1e-9));
  return std::min(kept, pairs);
}

Tensor threshold_adjacency(const Tensor& corr, double keep_fraction) {
  if (corr.rank() != 2 || corr.rows() != corr.cols()) throw DimensionError("correlation matrix must be square");
  const std::size_t n = corr.rows();
  const std::size_t kept = kept_pair_count(n, keep_fraction);

  struct Ranked {
    double strength;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Ranked> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({std::abs(corr(i, j)), i, j});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Ranked& a, const Ranked& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  Tensor adjacency = Tensor::matrix(n, n);
  for (std::size_t k = 0; k < kept && k < pairs.size(); ++k) {
    if (pairs[k].strength == 0.0) break;
    adjacency(pairs[k].i, pairs[k].j) = 1.0;
    adjacency(pairs[k].j, pairs[k].i) = 1.0;
  }
  return adjacency;
}

BrainGraph build_graph(const Tensor& corr, double keep_fraction, std::vector<std::string> regions, int label,
                       GraphMeta meta, std::string id) {
  if (corr.rank() != 2 || corr.rows() != corr.cols()) throw DimensionError("correlation matrix must be square");
  if (regions.size() != corr.rows()) {
    throw ConsistencyError("region list has " + std::to_string(regions.size()) + " names for " +
                           std::to_string(corr.rows()) + " nodes");
  }
  BrainGraph g;
  g.id = std::move(id);
  g.node_features = corr;
  g.adjacency = threshold_adjacency(corr, keep_fraction);
  g.regions = std::move(regions);
  g.label = label;
  g.meta = std::move(meta);
  validate(g);
  return g;
}

}  // namespace bleg::graphdata
