#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/graphdata/brain_graph.hpp"

namespace bleg::promptgen {

struct ParsedResponse {
  std::string analysis;
  std::vector<std::string> key_features;
  std::string prediction;
  int certainty = 1;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

/// Each dimension on the 1 to 5 scale.
struct QualityScore {
  double professional_expression = 1.0;
  double content_relevance = 1.0;
  double repetition = 1.0;

  [[nodiscard]] double overall() const { return (professional_expression + content_relevance + repetition) / 3.0; }
  friend bool operator==(const QualityScore&, const QualityScore&) = default;
};

struct TextRecord {
  std::string graph_id;
  std::string prompt;
  std::string raw;
  ParsedResponse parsed;
  std::string provenance;
  std::optional<QualityScore> quality;
  int refinements = 0;

  friend bool operator==(const TextRecord&, const TextRecord&) = default;
};

/// Extracts the outermost JSON object from `raw` (code fences and chatter
/// around it are tolerated) and validates it against the response schema.
/// Raises MalformedResponseError naming the violated field.
ParsedResponse parse_response(const std::string& raw, const graphdata::TaskInfo& task);

/// Canonical text of a parsed response; this is what the language model is
/// tuned to produce.
std::string render_response(const ParsedResponse& r);

nlohmann::json to_json(const ParsedResponse& r);
nlohmann::json to_json(const QualityScore& q);
nlohmann::json to_json(const TextRecord& r);
TextRecord text_record_from_json(const nlohmann::json& j);

}  // namespace bleg::promptgen
