#include "bleg/promptgen/quality.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::promptgen {

namespace {

constexpr double kLexiconTarget = 5.0;

std::string record_text(const TextRecord& r) {
  std::string text = r.parsed.analysis;
  for (const auto& f : r.parsed.key_features) text += "\n" + f;
  return text;
}

}  // namespace

const std::vector<std::string>& medical_lexicon() {
  static const std::vector<std::string> terms = {
      "functional connectivity", "connectivity",     "network",           "coupling",
      "synchronization",         "correlation",      "resting state",     "fmri",
      "bold",                    "cortex",           "cortical",          "subcortical",
      "hemisphere",              "default mode",     "salience",          "executive",
      "limbic",                  "frontal",          "temporal",          "parietal",
      "occipital",               "thalamic",         "hippocampal",       "neural",
      "neuronal",                "hyperconnectivity", "hypoconnectivity", "biomarker",
      "pathology",               "diagnosis",        "atypical",          "regional",
      "topology",                "modularity",       "integration",       "segregation",
  };
  return terms;
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '_') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double repeated_fourgram_fraction(const std::string& text) {
  const auto w = words(text);
  if (w.size() < 4) return 0.0;
  std::set<std::array<std::string, 4>> seen;
  std::size_t repeats = 0;
  const std::size_t total = w.size() - 3;
  for (std::size_t k = 0; k < total; ++k) {
    if (!seen.insert({w[k], w[k + 1], w[k + 2], w[k + 3]}).second) ++repeats;
  }
  return static_cast<double>(repeats) / static_cast<double>(total);
}

double repetition_score(double fraction) {
  if (fraction <= 0.05) return 5.0;
  if (fraction >= 0.40) return 1.0;
  return 5.0 - 4.0 * (fraction - 0.05) / 0.35;
}

std::vector<std::string> referenced_regions(const std::string& text) {
  static const std::regex region_re(R"(\b(?:[A-Z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)*_[LR]|ROI_\d+)\b)");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), region_re); it != std::sregex_iterator(); ++it) {
    if (seen.insert(it->str()).second) out.push_back(it->str());
  }
  return out;
}

QualityScore score_record(const TextRecord& r, const graphdata::BrainGraph& g) {
  QualityScore q;
  if (words(r.parsed.analysis).empty()) return q;
  const std::string text = record_text(r);

  q.repetition = repetition_score(repeated_fourgram_fraction(text));

  const auto refs = referenced_regions(text);
  if (!refs.empty()) {
    const std::set<std::string> present(g.regions.begin(), g.regions.end());
    const auto hits = std::count_if(refs.begin(), refs.end(), [&](const std::string& s) { return present.count(s) > 0; });
    q.content_relevance = 1.0 + 4.0 * static_cast<double>(hits) / static_cast<double>(refs.size());
  }

  std::string joined = " ";
  for (const auto& w : words(text)) joined += w + " ";
  std::size_t found = 0;
  for (const auto& term : medical_lexicon()) {
    std::string key = " ";
    for (const auto& w : words(term)) key += w + " ";
    if (joined.find(key) != std::string::npos) ++found;
  }
  q.professional_expression = 1.0 + 4.0 * std::min(1.0, static_cast<double>(found) / kLexiconTarget);
  return q;
}

QualityScore LlmJudge::judge(const TextRecord& r, const graphdata::BrainGraph& g) {
  std::string regions;
  for (std::size_t k = 0; k < g.regions.size(); ++k) regions += (k ? ", " : "") + g.regions[k];
  const std::string prompt = fmt::format(
      "You are judging an analysis of an fMRI brain network. Score it from 1 to 5 on professional_expression "
      "(correct neuroscience terminology), content_relevance (claims refer to regions present in the network: {}) "
      "and repetition (5 = no repeated content). Reply with only "
      "{{\"professional_expression\": k, \"content_relevance\": k, \"repetition\": k}}.\n\nAnalysis:\n{}",
      regions, render_response(r.parsed));
  const std::string raw = backend_.complete(prompt);
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw MalformedResponseError("judge reply contains no JSON object");
  }
  try {
    const auto j = nlohmann::json::parse(raw.substr(open, close - open + 1));
    QualityScore q{j.at("professional_expression").get<double>(), j.at("content_relevance").get<double>(),
                   j.at("repetition").get<double>()};
    for (double v : {q.professional_expression, q.content_relevance, q.repetition}) {
      if (!(v >= 1.0 && v <= 5.0)) throw MalformedResponseError("judge score outside [1, 5]");
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("judge reply is malformed: ") + e.what());
  }
}

}  // namespace bleg::promptgen
