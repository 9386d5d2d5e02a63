#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "metacritique/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "metacritique/errors.hpp"

namespace metacritique {

namespace {

using nlohmann::json;

const char* role_name(MessageRole role) {
  return role == MessageRole::system ? "system" : "user";
}

json request_to_json(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  // nlohmann objects keep keys sorted, so dumping this is a canonical
  // serialization: key order never varies, content bytes always matter.
  return json{
      {"model", request.model},
      {"messages", messages},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };
}

CompletionRequest request_from_json(const json& j) {
  CompletionRequest request;
  request.model = j.at("model").get<std::string>();
  request.temperature = j.at("temperature").get<double>();
  request.max_tokens = j.at("max_tokens").get<int>();
  for (const auto& m : j.at("messages")) {
    Message msg;
    std::string role = m.at("role").get<std::string>();
    msg.role = role == "system" ? MessageRole::system : MessageRole::user;
    msg.content = m.at("content").get<std::string>();
    request.messages.push_back(std::move(msg));
  }
  return request;
}

std::string last_user_content(const CompletionRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == MessageRole::user) return it->content;
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// FixtureSet

FixtureSet FixtureSet::from_json_text(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError("fixture file is not a JSON object");
  }
  FixtureSet set;
  if (j.contains("by_digest")) {
    for (const auto& [key, value] : j["by_digest"].items()) {
      set.by_digest.emplace(key, value.get<std::string>());
    }
  }
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      FixtureRule rule;
      if (r.contains("contains")) {
        if (r["contains"].is_string()) {
          rule.contains.push_back(r["contains"].get<std::string>());
        } else {
          for (const auto& s : r["contains"]) rule.contains.push_back(s.get<std::string>());
        }
      }
      rule.response = r.at("response").get<std::string>();
      set.rules.push_back(std::move(rule));
    }
  }
  if (j.contains("fallback")) {
    set.fallback = j["fallback"].get<std::string>();
  }
  return set;
}

FixtureSet FixtureSet::load(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(FixtureSet fixtures) : fixtures_(std::move(fixtures)) {}

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
  calls_.fetch_add(1);
  int now = in_flight_.fetch_add(1) + 1;
  int seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  if (delay_ms_ > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
  }

  struct InFlight {
    std::atomic<int>& counter;
    ~InFlight() { counter.fetch_sub(1); }
  } guard{in_flight_};

  std::string text;
  bool found = false;

  std::string digest = Gateway::cache_key(request);
  auto hit = fixtures_.by_digest.find(digest);
  if (hit != fixtures_.by_digest.end()) {
    text = hit->second;
    found = true;
  }

  if (!found) {
    std::string user = last_user_content(request);
    for (const auto& rule : fixtures_.rules) {
      bool all = true;
      for (const auto& needle : rule.contains) {
        if (user.find(needle) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (all) {
        text = rule.response;
        found = true;
        break;
      }
    }
  }

  if (!found && fixtures_.fallback) {
    text = *fixtures_.fallback;
    found = true;
  }

  if (!found) {
    std::string user = last_user_content(request);
    throw FixtureMissError("no fixture matches request (user message starts: '" +
                           user.substr(0, 120) + "')");
  }

  CompletionResult result;
  result.text = text;
  result.model = request.model;
  result.usage.prompt_tokens = 0;
  result.usage.completion_tokens = 0;
  result.cached = false;
  return result;
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  const std::string& url = config_.base_url;
  std::size_t scheme = url.find("://");
  std::size_t path_at = (scheme == std::string::npos) ? url.find('/')
                                                      : url.find('/', scheme + 3);
  if (path_at == std::string::npos) {
    host_ = url;
    path_prefix_.clear();
  } else {
    host_ = url.substr(0, path_at);
    path_prefix_ = url.substr(path_at);
  }
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
  const char* key_raw = std::getenv(config_.api_key_env.c_str());
  std::string api_key = key_raw ? key_raw : "";
  if (api_key.empty()) {
    throw AuthError("environment variable " + config_.api_key_env +
                    " is not set; cannot authenticate");
  }

  json body = request_to_json(request);
  if (request.seed_hint) {
    body["seed"] = *request.seed_hint;
  }

  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_write_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};

  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    throw TransportError("request to " + host_ + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw AuthError("backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 408 || res->status == 429 || res->status >= 500) {
    throw TransportError("backend transient failure (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status != 200) {
    throw RequestRejectedError("backend rejected request (HTTP " + std::to_string(res->status) +
                               "): " + res->body.substr(0, 200));
  }

  json payload = json::parse(res->body, nullptr, false);
  if (payload.is_discarded()) {
    throw MalformedResponseError("backend returned invalid JSON");
  }
  try {
    const auto& choices = payload.at("choices");
    if (!choices.is_array() || choices.empty()) {
      throw MalformedResponseError("backend response has no choices");
    }
    CompletionResult result;
    result.text = choices[0].at("message").at("content").get<std::string>();
    result.model = payload.value("model", request.model);
    if (payload.contains("usage")) {
      result.usage.prompt_tokens = payload["usage"].value("prompt_tokens", 0);
      result.usage.completion_tokens = payload["usage"].value("completion_tokens", 0);
    }
    result.cached = false;
    if (result.text.empty()) {
      throw MalformedResponseError("backend returned an empty completion");
    }
    return result;
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("backend response missing fields: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(BackendConfig config, std::unique_ptr<Backend> backend)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      semaphore_(config_.max_concurrency > 0 ? config_.max_concurrency : 1) {}

std::string Gateway::cache_key(const CompletionRequest& request) {
  return sha256_hex(request_to_json(request).dump());
}

std::optional<CompletionResult> Gateway::cache_read(const std::string& key,
                                                    const CompletionRequest& request) const {
  std::filesystem::path path = config_.cache_dir / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;

  json entry = json::parse(read_file(path), nullptr, false);
  if (entry.is_discarded()) {
    throw StoreError("cache entry " + path.string() + " is not valid JSON");
  }
  // Stored request must be the same one we are asking about; anything else
  // means the digest collided or the file was tampered with.
  if (entry.at("request") != request_to_json(request)) {
    throw StoreError("cache entry " + path.string() + " does not match its key");
  }
  const auto& r = entry.at("result");
  CompletionResult result;
  result.text = r.at("text").get<std::string>();
  result.model = r.at("model").get<std::string>();
  result.usage.prompt_tokens = r.at("usage").at("prompt_tokens").get<std::int64_t>();
  result.usage.completion_tokens = r.at("usage").at("completion_tokens").get<std::int64_t>();
  result.cached = true;
  return result;
}

void Gateway::cache_write(const std::string& key, const CompletionRequest& request,
                          const CompletionResult& result) const {
  json entry = {
      {"schema_version", 1},
      {"key", key},
      {"request", request_to_json(request)},
      {"result",
       {{"text", result.text},
        {"model", result.model},
        {"usage",
         {{"prompt_tokens", result.usage.prompt_tokens},
          {"completion_tokens", result.usage.completion_tokens}}}}},
      {"timestamp", iso8601_now()},
  };
  write_file_atomic(config_.cache_dir / (key + ".json"), entry.dump(2) + "\n");
}

CompletionResult Gateway::call_with_retries(const CompletionRequest& request) {
  thread_local std::mt19937_64 jitter_rng(
      std::random_device{}() ^
      static_cast<std::uint64_t>(
          std::chrono::steady_clock::now().time_since_epoch().count()));

  int attempt = 0;
  while (true) {
    try {
      SemaphoreGuard slot(semaphore_);
      stats_.backend_calls.fetch_add(1);
      return backend_->complete(request);
    } catch (const TransportError& e) {
      if (attempt >= config_.max_retries) {
        throw RetryExhaustedError("giving up after " + std::to_string(attempt + 1) +
                                  " attempts; last error: " + e.what());
      }
      stats_.retries.fetch_add(1);
      double base = static_cast<double>(config_.backoff_initial_ms) *
                    std::pow(2.0, static_cast<double>(attempt));
      std::uniform_real_distribution<double> jitter(0.5, 1.5);
      auto delay = std::chrono::duration<double, std::milli>(base * jitter(jitter_rng));
      std::this_thread::sleep_for(delay);
      ++attempt;
    }
  }
}

CompletionResult Gateway::complete(const CompletionRequest& request, CacheMode mode) {
  bool caching = !config_.cache_dir.empty();
  std::string key = caching ? cache_key(request) : std::string();

  if (caching && mode == CacheMode::use) {
    if (auto hit = cache_read(key, request)) {
      stats_.cache_hits.fetch_add(1);
      return *hit;
    }
  }

  CompletionResult result = call_with_retries(request);

  if (caching) {
    cache_write(key, request, result);
    stats_.cache_writes.fetch_add(1);
  }
  return result;
}

}  // namespace metacritique
