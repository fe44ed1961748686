#pragma once

#include <string>
#include <vector>

#include "bleg/numerics/tensor.hpp"

namespace bleg::eval {

enum class Saliency { l2_norm, mean_abs };

Saliency saliency_from_string(const std::string& s);
std::string to_string(Saliency s);

struct BiomarkerRow {
  std::size_t rank = 0;  // 1-based
  std::size_t region = 0;
  std::string name;
  double score = 0.0;
};

/// Scores region r by the mean over graphs of the saliency of its node
/// embedding (row r of each block), sorted descending with ties broken by
/// region index; the first `k` rows are returned.
std::vector<BiomarkerRow> biomarker_rank(const std::vector<numerics::Tensor>& node_embeddings,
                                         const std::vector<std::string>& regions, std::size_t k = 10,
                                         Saliency kind = Saliency::l2_norm);

/// rank,region,name,score
std::string biomarker_csv(const std::vector<BiomarkerRow>& rows);

}  // namespace bleg::eval
