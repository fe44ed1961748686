#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"
#include "bleg/promptgen/backend.hpp"
#include "bleg/promptgen/quality.hpp"
#include "bleg/promptgen/record.hpp"

namespace bleg::promptgen {

struct QuarantineEntry {
  std::string graph_id;
  std::string reason;
  std::optional<TextRecord> record;
};

struct CurationResult {
  std::vector<TextRecord> accepted;  // input order
  std::vector<QuarantineEntry> quarantined;
  std::size_t refinement_requests = 0;
};

/// Original prompt followed by a critique naming the weak dimensions.
std::string refinement_prompt(const TextRecord& r, const QualityScore& q, double threshold);

/// Records scoring at least `threshold` pass. The rest get one refinement
/// request; the regenerated record passes or is quarantined. Unscored
/// records are scored with `judge` first.
CurationResult curate_dataset(const std::vector<std::pair<const graphdata::BrainGraph*, TextRecord>>& pairs,
                              TextBackend& backend, QualityJudge& judge, double threshold = kDefaultQualityThreshold,
                              std::size_t concurrency = 4);

struct GenTextConfig {
  double threshold = kDefaultQualityThreshold;
  std::size_t concurrency = 4;
};

/// Prompts every graph, quarantines requests that fail, then curates.
CurationResult generate_text_dataset(const std::vector<graphdata::BrainGraph>& graphs, TextBackend& backend,
                                     QualityJudge& judge, const GenTextConfig& cfg = {});

/// One JSON record per line.
void write_text_dataset(const std::filesystem::path& path, const std::vector<TextRecord>& records);
std::vector<TextRecord> read_text_dataset(const std::filesystem::path& path);
void write_quarantine(const std::filesystem::path& path, const std::vector<QuarantineEntry>& entries);

}  // namespace bleg::promptgen
