#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bleg/graphdata/brain_graph.hpp"
#include "bleg/promptgen/record.hpp"

namespace bleg::promptgen {

/// A text-completion service. Implementations must be safe to call from
/// several threads at once.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

using PlantedSets = std::array<std::vector<graphdata::Edge>, 2>;

/// Deterministic stand-in for a remote LLM. Reads the edge weights and the
/// region table back out of the prompt, compares the mean weight over each
/// class's planted pairs and writes a templated JSON answer naming the
/// winning pairs. Without planted sets it describes the strongest edges and
/// abstains on the label (first label, certainty 1).
class OfflineOracle : public TextBackend {
 public:
  explicit OfflineOracle(std::optional<PlantedSets> planted = std::nullopt) : planted_(std::move(planted)) {}
  std::string complete(const std::string& prompt) override;
  [[nodiscard]] std::string name() const override { return "offline-oracle"; }

 private:
  std::optional<PlantedSets> planted_;
};

struct RemoteConfig {
  /// Full chat-completions URL, e.g. http://host:port/v1/chat/completions.
  std::string endpoint;
  std::string model = "deepseek-chat";
  std::string api_key;
  double temperature = 0.7;
  int max_tokens = 1024;
  int max_retries = 3;
  int backoff_ms = 500;
  int timeout_s = 120;
};

/// Fills endpoint and key from BLEG_API_URL / BLEG_API_KEY when unset.
RemoteConfig remote_config_from_env(RemoteConfig base = {});

/// OpenAI-style chat completion over HTTP(S). Connection failures, 429 and
/// 5xx responses are retried with exponential backoff; anything left raises
/// TransportError.
class RemoteBackend : public TextBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  std::string complete(const std::string& prompt) override;
  [[nodiscard]] std::string name() const override { return cfg_.model; }

 private:
  RemoteConfig cfg_;
  std::string origin_;
  std::string path_;
};

struct TextRequest {
  std::string graph_id;
  std::string prompt;
  graphdata::TaskInfo task;
};

/// One completion plus one structured retry on a schema violation. The
/// returned record has no quality score yet.
TextRecord request_text(const TextRequest& req, TextBackend& backend);

struct RequestOutcome {
  std::optional<TextRecord> record;
  std::string error_kind;
  std::string error_message;
};

/// Issues up to `concurrency` requests at once; outcomes are returned in
/// input order whatever the completion order.
std::vector<RequestOutcome> request_batch(const std::vector<TextRequest>& reqs, TextBackend& backend,
                                          std::size_t concurrency = 4);

}  // namespace bleg::promptgen
