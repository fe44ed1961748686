#pragma once

#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"
#include "bleg/promptgen/backend.hpp"
#include "bleg/promptgen/record.hpp"

namespace bleg::promptgen {

inline constexpr double kDefaultQualityThreshold = 3.0;

/// Packaged lexicon of neuroimaging terms (lower case).
const std::vector<std::string>& medical_lexicon();

/// Lower-cased word tokens (letters, digits, '_', '.', '-').
std::vector<std::string> words(const std::string& text);

/// Share of 4-gram positions whose 4-gram already occurred earlier.
double repeated_fourgram_fraction(const std::string& text);

/// 5 at <= 5% repetition, 1 at >= 40%, linear in between.
double repetition_score(double fraction);

/// Region-like tokens (AAL-style names ending in _L / _R, or ROI_k).
std::vector<std::string> referenced_regions(const std::string& text);

/// Heuristic scores over the analysis plus key features. An empty analysis
/// scores 1 on every dimension.
QualityScore score_record(const TextRecord& r, const graphdata::BrainGraph& g);

class QualityJudge {
 public:
  virtual ~QualityJudge() = default;
  virtual QualityScore judge(const TextRecord& r, const graphdata::BrainGraph& g) = 0;
};

class HeuristicJudge : public QualityJudge {
 public:
  QualityScore judge(const TextRecord& r, const graphdata::BrainGraph& g) override { return score_record(r, g); }
};

/// Asks a text backend to grade the record and expects
/// {"professional_expression": k, "content_relevance": k, "repetition": k}.
class LlmJudge : public QualityJudge {
 public:
  explicit LlmJudge(TextBackend& backend) : backend_(backend) {}
  QualityScore judge(const TextRecord& r, const graphdata::BrainGraph& g) override;

 private:
  TextBackend& backend_;
};

}  // namespace bleg::promptgen
