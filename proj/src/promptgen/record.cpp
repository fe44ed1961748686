#include "bleg/promptgen/record.hpp"

#include <cmath>

#include "bleg/error.hpp"

namespace bleg::promptgen {

namespace {

[[noreturn]] void malformed(const std::string& why) { throw MalformedResponseError("response " + why); }

int parse_certainty(const nlohmann::json& v) {
  double x = 0.0;
  if (v.is_number()) {
    x = v.get<double>();
  } else if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t used = 0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      malformed("field 'certainty' is not a number: '" + s + "'");
    }
    if (used != s.size()) malformed("field 'certainty' is not a number: '" + s + "'");
  } else {
    malformed("field 'certainty' must be a number");
  }
  if (x != std::floor(x)) malformed("field 'certainty' must be an integer");
  if (x < 1.0 || x > 5.0) malformed("field 'certainty' = " + std::to_string(static_cast<long long>(x)) + " is outside [1, 5]");
  return static_cast<int>(x);
}

}  // namespace

ParsedResponse parse_response(const std::string& raw, const graphdata::TaskInfo& task) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) malformed("contains no JSON object");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) malformed("is not a JSON object");
  ParsedResponse r;
  if (!j.contains("analysis") || !j["analysis"].is_string()) malformed("field 'analysis' missing or not a string");
  r.analysis = j["analysis"].get<std::string>();
  if (!j.contains("key_features") || !j["key_features"].is_array()) malformed("field 'key_features' missing or not a list");
  for (const auto& f : j["key_features"]) {
    if (!f.is_string()) malformed("field 'key_features' must hold strings");
    r.key_features.push_back(f.get<std::string>());
  }
  if (!j.contains("prediction") || !j["prediction"].is_string()) malformed("field 'prediction' missing or not a string");
  r.prediction = j["prediction"].get<std::string>();
  if (r.prediction != task.labels[0] && r.prediction != task.labels[1]) {
    malformed("prediction '" + r.prediction + "' is not '" + task.labels[0] + "' or '" + task.labels[1] + "'");
  }
  if (!j.contains("certainty")) malformed("field 'certainty' missing");
  r.certainty = parse_certainty(j["certainty"]);
  return r;
}

nlohmann::json to_json(const ParsedResponse& r) {
  return {{"analysis", r.analysis}, {"key_features", r.key_features}, {"prediction", r.prediction}, {"certainty", r.certainty}};
}

std::string render_response(const ParsedResponse& r) { return to_json(r).dump(); }

nlohmann::json to_json(const QualityScore& q) {
  return {{"professional_expression", q.professional_expression},
          {"content_relevance", q.content_relevance},
          {"repetition", q.repetition},
          {"overall", q.overall()}};
}

nlohmann::json to_json(const TextRecord& r) {
  nlohmann::json j = {{"graph_id", r.graph_id},
                      {"prompt", r.prompt},
                      {"response", to_json(r.parsed)},
                      {"provenance", r.provenance},
                      {"refinements", r.refinements}};
  j["quality"] = r.quality ? to_json(*r.quality) : nlohmann::json(nullptr);
  if (!r.raw.empty()) j["raw"] = r.raw;
  return j;
}

TextRecord text_record_from_json(const nlohmann::json& j) {
  try {
    TextRecord r;
    r.graph_id = j.at("graph_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    const auto& resp = j.at("response");
    r.parsed.analysis = resp.at("analysis").get<std::string>();
    r.parsed.key_features = resp.at("key_features").get<std::vector<std::string>>();
    r.parsed.prediction = resp.at("prediction").get<std::string>();
    r.parsed.certainty = resp.at("certainty").get<int>();
    r.provenance = j.at("provenance").get<std::string>();
    r.refinements = j.value("refinements", 0);
    r.raw = j.value("raw", std::string{});
    if (j.contains("quality") && !j["quality"].is_null()) {
      const auto& q = j["quality"];
      r.quality = QualityScore{q.at("professional_expression").get<double>(), q.at("content_relevance").get<double>(),
                               q.at("repetition").get<double>()};
    }
    if (r.parsed.certainty < 1 || r.parsed.certainty > 5) throw FormatError("record certainty outside [1, 5]");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed text record: ") + e.what());
  }
}

}  // namespace bleg::promptgen
