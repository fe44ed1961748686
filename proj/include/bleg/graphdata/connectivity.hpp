#pragma once

#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"

namespace bleg::graphdata {

inline constexpr double kDefaultKeepFraction = 0.2;

/// N x N Pearson correlation between the region columns of a T x N series.
/// Symmetric with an exact unit diagonal; a constant column raises
/// DegenerateSeriesError naming the region.
Tensor pearson_from_timeseries(const TimeSeriesRecord& ts, const std::vector<std::string>& regions = {});

/// Number of pairs kept for a given node count: ceil(keep_fraction * N(N-1)/2).
std::size_t kept_pair_count(std::size_t n, double keep_fraction);

/// Proportional thresholding by |correlation|. The top kept_pair_count()
/// pairs become edges, ranked by |r| descending with ties broken by smaller
/// i, then smaller j. Pairs with r == 0 exactly carry no connection and are
/// never selected.
Tensor threshold_adjacency(const Tensor& corr, double keep_fraction = kDefaultKeepFraction);

/// Node features are the correlation rows; adjacency from threshold_adjacency.
BrainGraph build_graph(const Tensor& corr, double keep_fraction, std::vector<std::string> regions, int label,
                       GraphMeta meta, std::string id = {});

}  // namespace bleg::graphdata
