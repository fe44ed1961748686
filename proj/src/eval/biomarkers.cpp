#include "bleg/eval/biomarkers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::eval {

Saliency saliency_from_string(const std::string& s) {
  if (s == "l2" || s == "l2_norm") return Saliency::l2_norm;
  if (s == "mean_abs") return Saliency::mean_abs;
  throw ConfigurationError("unknown saliency '" + s + "' (expected l2_norm or mean_abs)");
}

std::string to_string(Saliency s) { return s == Saliency::l2_norm ? "l2_norm" : "mean_abs"; }

std::vector<BiomarkerRow> biomarker_rank(const std::vector<numerics::Tensor>& node_embeddings,
                                         const std::vector<std::string>& regions, std::size_t k, Saliency kind) {
  if (node_embeddings.empty()) throw InsufficientDataError("no embeddings to rank");
  const std::size_t n = regions.size();
  std::vector<double> score(n, 0.0);
  for (const auto& x : node_embeddings) {
    if (x.rows() != n) throw DimensionError(fmt::format("embedding has {} rows for {} regions", x.rows(), n));
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (double v : x.row_span(r)) s += kind == Saliency::l2_norm ? v * v : std::abs(v);
      score[r] += kind == Saliency::l2_norm ? std::sqrt(s) : s / static_cast<double>(x.cols());
    }
  }
  for (auto& s : score) s /= static_cast<double>(node_embeddings.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<BiomarkerRow> out;
  for (std::size_t i = 0; i < std::min(k, n); ++i) {
    out.push_back(BiomarkerRow{i + 1, order[i], regions[order[i]], score[order[i]]});
  }
  return out;
}

std::string biomarker_csv(const std::vector<BiomarkerRow>& rows) {
  std::string out = "rank,region,name,score\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{:.17g}\n", r.rank, r.region, r.name, r.score);
  return out;
}

}  // namespace bleg::eval
