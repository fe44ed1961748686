#include "bleg/promptgen/backend.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "bleg/error.hpp"
#include "bleg/promptgen/prompt.hpp"

namespace bleg::promptgen {

namespace {

struct PairView {
  graphdata::Edge edge;
  double weight;
};

std::string pair_phrase(const PromptHeader& h, const PairView& p) {
  return fmt::format("{} and {} ({:.2f})", h.regions.at(p.edge.i), h.regions.at(p.edge.j), p.weight);
}

std::string join(const std::vector<std::string>& parts) {
  if (parts.size() == 1) return parts[0];
  std::string out;
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) out += (k ? ", " : "") + parts[k];
  return out + " and " + parts.back();
}

}  // namespace

std::string OfflineOracle::complete(const std::string& prompt) {
  const auto header = parse_prompt_header(prompt);
  const auto graph = parse_graph_text(prompt);
  std::map<graphdata::Edge, double> weight;
  for (const auto& e : graph.edges) {
    if (e.edge.i >= header.regions.size() || e.edge.j >= header.regions.size()) {
      throw FormatError("prompt references a region outside its region table");
    }
    weight[e.edge] = e.weight;
  }
  const auto w = [&](const graphdata::Edge& e) {
    const auto it = weight.find(e);
    return it == weight.end() ? 0.0 : it->second;
  };

  nlohmann::json out;
  if (!planted_) {
    std::vector<PairView> strongest;
    for (const auto& e : graph.edges) strongest.push_back({e.edge, e.weight});
    std::stable_sort(strongest.begin(), strongest.end(),
                     [](const PairView& a, const PairView& b) { return std::abs(a.weight) > std::abs(b.weight); });
    strongest.resize(std::min<std::size_t>(strongest.size(), 3));
    std::vector<std::string> phrases;
    std::vector<std::string> features;
    for (const auto& p : strongest) {
      phrases.push_back(pair_phrase(header, p));
      features.push_back(fmt::format("{}-{} connectivity {:.2f}", header.regions[p.edge.i], header.regions[p.edge.j], p.weight));
    }
    out["analysis"] = phrases.empty()
                          ? fmt::format("The resting-state fMRI network of this {} subject retains no thresholded "
                                        "functional connectivity, so no regional coupling can be assessed.",
                                        header.dataset)
                          : fmt::format("The resting-state fMRI network of this {} subject shows its strongest "
                                        "functional connectivity between {}. No reference pattern is available to "
                                        "link this coupling to a diagnosis.",
                                        header.dataset, join(phrases));
    out["key_features"] = features;
    out["prediction"] = header.labels[0];
    out["certainty"] = 1;
    return out.dump();
  }

  std::array<double, 2> mean{0.0, 0.0};
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& e : (*planted_)[c]) {
      if (e.j >= header.regions.size()) throw ConsistencyError("planted edge outside the prompt's region table");
      mean[c] += w(e);
    }
    if (!(*planted_)[c].empty()) mean[c] /= static_cast<double>((*planted_)[c].size());
  }
  const std::size_t cls = mean[1] > mean[0] ? 1 : 0;
  const std::size_t other = 1 - cls;
  const double margin = std::abs(mean[1] - mean[0]);
  const int certainty = std::clamp(1 + static_cast<int>(std::floor(margin * 5.0)), 1, 5);

  std::vector<PairView> pairs;
  for (const auto& e : (*planted_)[cls]) pairs.push_back({e, w(e)});
  std::stable_sort(pairs.begin(), pairs.end(), [](const PairView& a, const PairView& b) { return a.weight > b.weight; });
  pairs.resize(std::min<std::size_t>(pairs.size(), 3));
  std::vector<std::string> phrases;
  std::vector<std::string> features;
  for (const auto& p : pairs) {
    phrases.push_back(pair_phrase(header, p));
    features.push_back(fmt::format("{}-{} connectivity {:.2f}", header.regions[p.edge.i], header.regions[p.edge.j], p.weight));
  }
  features.push_back(fmt::format("mean {} pattern strength {:.2f} versus {:.2f}", header.labels[cls], mean[cls], mean[other]));

  out["analysis"] = fmt::format(
      "Resting-state fMRI functional connectivity of this {} subject shows pronounced coupling between {}. "
      "These edges form the network signature associated with {}, while the regions linked to {} show weaker "
      "synchronization (mean correlation {:.2f} against {:.2f}). Given this connectivity pattern for {}, the "
      "subject is most consistent with {}.",
      header.dataset, join(phrases), header.labels[cls], header.labels[other], mean[other], mean[cls], header.task,
      header.labels[cls]);
  out["key_features"] = features;
  out["prediction"] = header.labels[cls];
  out["certainty"] = certainty;
  return out.dump();
}

RemoteConfig remote_config_from_env(RemoteConfig base) {
  if (base.endpoint.empty()) {
    if (const char* url = std::getenv("BLEG_API_URL")) base.endpoint = url;
  }
  if (base.api_key.empty()) {
    if (const char* key = std::getenv("BLEG_API_KEY")) base.api_key = key;
  }
  return base;
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (cfg_.endpoint.empty()) throw ConfigurationError("remote backend needs an endpoint (set BLEG_API_URL)");
  if (!std::regex_match(cfg_.endpoint, m, url_re)) {
    throw ConfigurationError("remote endpoint '" + cfg_.endpoint + "' is not an http(s) URL");
  }
  origin_ = m[1].str();
  path_ = m[2].matched && !m[2].str().empty() ? m[2].str() : "/v1/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin_.rfind("https://", 0) == 0) throw ConfigurationError("this build has no TLS support for https endpoints");
#endif
  if (cfg_.max_retries < 0) throw ConfigurationError("max_retries must be non-negative");
}

std::string RemoteBackend::complete(const std::string& prompt) {
  const nlohmann::json body = {{"model", cfg_.model},
                               {"temperature", cfg_.temperature},
                               {"max_tokens", cfg_.max_tokens},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
    httplib::Client client(origin_);
    client.set_connection_timeout(cfg_.timeout_s, 0);
    client.set_read_timeout(cfg_.timeout_s, 0);
    const auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) throw TransportError(fmt::format("{} returned HTTP {}: {}", cfg_.endpoint, res->status, res->body));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponseError(std::string("chat completion envelope is malformed: ") + e.what());
    }
  }
  throw TransportError(fmt::format("{} failed after {} attempts ({})", cfg_.endpoint, cfg_.max_retries + 1, last_error));
}

TextRecord request_text(const TextRequest& req, TextBackend& backend) {
  TextRecord r;
  r.graph_id = req.graph_id;
  r.prompt = req.prompt;
  r.provenance = backend.name();
  r.raw = backend.complete(req.prompt);
  try {
    r.parsed = parse_response(r.raw, req.task);
    return r;
  } catch (const MalformedResponseError& first) {
    const std::string retry = req.prompt +
                              "\n\n# Format Correction\nYour previous reply could not be used: " + first.what() +
                              ". Reply with only the JSON object described in the output format.";
    r.raw = backend.complete(retry);
    try {
      r.parsed = parse_response(r.raw, req.task);
    } catch (const MalformedResponseError& second) {
      throw MalformedResponseError("graph '" + req.graph_id + "': " + second.what() + " (after one retry)");
    }
    return r;
  }
}

std::vector<RequestOutcome> request_batch(const std::vector<TextRequest>& reqs, TextBackend& backend,
                                          std::size_t concurrency) {
  std::vector<RequestOutcome> out(reqs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < reqs.size(); k = next++) {
      try {
        out[k].record = request_text(reqs[k], backend);
      } catch (const Error& e) {
        out[k].error_kind = e.kind();
        out[k].error_message = e.what();
      } catch (const std::exception& e) {
        out[k].error_kind = "internal";
        out[k].error_message = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(concurrency, 1, std::max<std::size_t>(reqs.size(), 1));
  if (n_threads == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace bleg::promptgen
