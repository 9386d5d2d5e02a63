#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "metacritique/util.hpp"

namespace metacritique {

enum class MessageRole {
  system,
  user,
};

struct Message {
  MessageRole role = MessageRole::user;
  std::string content;
};

struct CompletionRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed_hint;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct CompletionResult {
  std::string text;  // verbatim completion, no trimming
  std::string model;
  Usage usage;
  bool cached = false;
};

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  // Name of the environment variable holding the key. The key itself is never
  // stored in config files or manifests.
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 3;
  int max_concurrency = 4;
  // Initial backoff; doubles per retry with +/-50% jitter.
  int backoff_initial_ms = 250;
  std::filesystem::path cache_dir;  // empty -> caching disabled
};

// One completion attempt against some model host. Implementations throw:
// AuthError, TransportError (retryable), MalformedResponseError,
// RequestRejectedError, FixtureMissError.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Canned responses for hermetic runs. Lookup order: exact request digest,
// then the first rule whose `contains` substrings all occur in the request's
// last user message, then the fallback if one is set.
struct FixtureRule {
  std::vector<std::string> contains;
  std::string response;
};

struct FixtureSet {
  std::unordered_map<std::string, std::string> by_digest;
  std::vector<FixtureRule> rules;
  std::optional<std::string> fallback;

  static FixtureSet from_json_text(const std::string& json_text);
  static FixtureSet load(const std::filesystem::path& path);
};

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(FixtureSet fixtures);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override { return "scripted"; }

  // Instrumentation for concurrency and call-count assertions.
  std::int64_t calls() const { return calls_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  void set_artificial_delay_ms(int ms) { delay_ms_ = ms; }

 private:
  FixtureSet fixtures_;
  std::atomic<std::int64_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  int delay_ms_ = 0;
};

// Talks to an OpenAI-style chat completions endpoint:
// POST {base_url}/chat/completions with a bearer token read from the
// environment variable named in the config.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override { return "http"; }

 private:
  BackendConfig config_;
  std::string host_;         // scheme://host[:port]
  std::string path_prefix_;  // e.g. "/v1"
};

struct GatewayStats {
  std::atomic<std::int64_t> backend_calls{0};
  std::atomic<std::int64_t> cache_hits{0};
  std::atomic<std::int64_t> cache_writes{0};
  std::atomic<std::int64_t> retries{0};
};

enum class CacheMode {
  use,     // read if present, write on success
  bypass,  // skip the read, still write the fresh result
};

// Retrying, caching, concurrency-bounded front of a Backend. Thread safe.
class Gateway {
 public:
  Gateway(BackendConfig config, std::unique_ptr<Backend> backend);

  CompletionResult complete(const CompletionRequest& request, CacheMode mode = CacheMode::use);

  // Digest identifying a request for the cache: covers model, messages,
  // temperature and max_tokens. Key order in any serialized form does not
  // matter; message order and whitespace do. seed_hint is advisory and
  // excluded.
  static std::string cache_key(const CompletionRequest& request);

  const GatewayStats& stats() const { return stats_; }
  const BackendConfig& config() const { return config_; }
  Backend& backend() { return *backend_; }

 private:
  CompletionResult call_with_retries(const CompletionRequest& request);
  std::optional<CompletionResult> cache_read(const std::string& key,
                                             const CompletionRequest& request) const;
  void cache_write(const std::string& key, const CompletionRequest& request,
                   const CompletionResult& result) const;

  BackendConfig config_;
  std::unique_ptr<Backend> backend_;
  Semaphore semaphore_;
  GatewayStats stats_;
};

}  // namespace metacritique
