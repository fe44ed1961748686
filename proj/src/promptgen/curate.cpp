#include "bleg/promptgen/curate.hpp"

#include <fmt/format.h>

#include "bleg/error.hpp"
#include "bleg/graphdata/io.hpp"
#include "bleg/promptgen/prompt.hpp"

namespace bleg::promptgen {

std::string refinement_prompt(const TextRecord& r, const QualityScore& q, double threshold) {
  std::string critique;
  if (q.professional_expression < threshold) critique += "\n- Use precise neuroscience terminology.";
  if (q.content_relevance < threshold) critique += "\n- Refer only to brain regions listed for this network.";
  if (q.repetition < threshold) critique += "\n- Do not repeat phrases or sentences.";
  if (critique.empty()) critique = "\n- Improve the overall quality of the analysis.";
  return fmt::format("{}\n\n# Critique\nYour previous answer scored {:.2f} of 5:\n{}{}\nRegenerate the answer.",
                     r.prompt, q.overall(), render_response(r.parsed), critique);
}

CurationResult curate_dataset(const std::vector<std::pair<const graphdata::BrainGraph*, TextRecord>>& pairs,
                              TextBackend& backend, QualityJudge& judge, double threshold, std::size_t concurrency) {
  CurationResult result;
  std::vector<std::optional<TextRecord>> kept(pairs.size());
  std::vector<std::size_t> retry_index;
  std::vector<TextRequest> retries;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [g, rec] = pairs[k];
    TextRecord r = rec;
    if (!r.quality) r.quality = judge.judge(r, *g);
    if (r.quality->overall() >= threshold) {
      kept[k] = std::move(r);
      continue;
    }
    retry_index.push_back(k);
    retries.push_back({r.graph_id, refinement_prompt(r, *r.quality, threshold), graphdata::task_info(g->meta.task)});
  }

  result.refinement_requests = retries.size();
  std::vector<std::optional<QuarantineEntry>> dropped(pairs.size());
  const auto outcomes = request_batch(retries, backend, concurrency);
  for (std::size_t n = 0; n < outcomes.size(); ++n) {
    const std::size_t k = retry_index[n];
    const auto& [g, original] = pairs[k];
    if (!outcomes[n].record) {
      dropped[k] = QuarantineEntry{original.graph_id, "refinement failed: " + outcomes[n].error_message, original};
      continue;
    }
    TextRecord r = *outcomes[n].record;
    r.prompt = original.prompt;
    r.refinements = original.refinements + 1;
    r.quality = judge.judge(r, *g);
    if (r.quality->overall() >= threshold) {
      kept[k] = std::move(r);
    } else {
      const std::string why = fmt::format("quality {:.2f} below threshold {:.2f} after refinement", r.quality->overall(), threshold);
      dropped[k] = QuarantineEntry{r.graph_id, why, std::move(r)};
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (kept[k]) result.accepted.push_back(std::move(*kept[k]));
    if (dropped[k]) result.quarantined.push_back(std::move(*dropped[k]));
  }
  return result;
}

CurationResult generate_text_dataset(const std::vector<graphdata::BrainGraph>& graphs, TextBackend& backend,
                                     QualityJudge& judge, const GenTextConfig& cfg) {
  std::vector<TextRequest> reqs;
  for (const auto& g : graphs) reqs.push_back({g.id, build_prompt(g).assembled, graphdata::task_info(g.meta.task)});
  const auto outcomes = request_batch(reqs, backend, cfg.concurrency);
  std::vector<std::pair<const graphdata::BrainGraph*, TextRecord>> pairs;
  std::vector<QuarantineEntry> failed;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    if (outcomes[k].record) {
      pairs.emplace_back(&graphs[k], *outcomes[k].record);
    } else {
      failed.push_back({graphs[k].id, outcomes[k].error_kind + ": " + outcomes[k].error_message, std::nullopt});
    }
  }
  auto result = curate_dataset(pairs, backend, judge, cfg.threshold, cfg.concurrency);
  result.quarantined.insert(result.quarantined.begin(), failed.begin(), failed.end());
  return result;
}

void write_text_dataset(const std::filesystem::path& path, const std::vector<TextRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  graphdata::write_text_file(path, out);
}

std::vector<TextRecord> read_text_dataset(const std::filesystem::path& path) {
  const std::string text = graphdata::read_text_file(path);
  std::vector<TextRecord> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(text_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

void write_quarantine(const std::filesystem::path& path, const std::vector<QuarantineEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::json j = {{"graph_id", e.graph_id}, {"reason", e.reason}};
    j["record"] = e.record ? to_json(*e.record) : nlohmann::json(nullptr);
    out += j.dump() + "\n";
  }
  graphdata::write_text_file(path, out);
}

}  // namespace bleg::promptgen
