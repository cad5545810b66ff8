#pragma once
// Language-model transport. Requests are JSON objects carrying a "task"
// discriminator; responses come back as raw text and are parsed by the
// gateway, so a provider returning garbage surfaces as a malformed
// response rather than a transport error.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace irec {

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Throws Error(LlmUnavailable) on transport failure or timeout.
  virtual std::string complete(const nlohmann::json& request) = 0;
};

// Deterministic scripted model for tests and offline use.
//
// Lookup order for a request:
//   1. fixture keyed by request digest (<dir>/<digest>.json),
//   2. the first rule whose task matches and whose substrings all occur in
//      the serialized request (<dir>/rules.json, or add_rule),
//   3. a built-in heuristic responder per task.
class StubLlm final : public LlmClient {
 public:
  struct Rule {
    std::string task;                   // empty matches any task
    std::vector<std::string> contains;  // all must occur in request.dump()
    std::string raw_response;           // returned verbatim
    bool unavailable = false;           // throw LlmUnavailable instead
  };

  StubLlm() = default;
  // Loads digest fixtures and rules.json from `fixture_dir`.
  explicit StubLlm(const std::filesystem::path& fixture_dir);

  // FNV-1a-64 hex of the compact serialization (keys sorted).
  static std::string digest(const nlohmann::json& request);

  void add_fixture(const std::string& digest, std::string raw_response);
  void add_rule(Rule rule);
  void set_available(bool available);

  std::string complete(const nlohmann::json& request) override;

  std::vector<nlohmann::json> requests() const;
  std::size_t call_count(const std::string& task) const;
  void clear_requests();

 private:
  mutable std::mutex mutex_;
  bool available_ = true;
  std::map<std::string, std::string> fixtures_;
  std::vector<Rule> rules_;
  std::vector<nlohmann::json> requests_;
};

// Built-in responder used by StubLlm when nothing scripted matches.
std::string stub_default_response(const nlohmann::json& request);

// Chat-completions style HTTP provider:
//   POST <endpoint> {"model", "messages": [system, user=<request json>]}
// The reply text is read from choices[0].message.content, or the whole
// body when that path is absent.
class HttpLlm final : public LlmClient {
 public:
  HttpLlm(std::string endpoint, std::string model, std::string system_directive,
          std::chrono::milliseconds timeout);
  std::string complete(const nlohmann::json& request) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::string system_directive_;
  std::chrono::milliseconds timeout_;
};

struct LlmConfig {
  std::string provider = "stub";
  std::string endpoint;
  std::string model;
  std::string fixtures;  // stub fixture directory, optional
  double timeout_s = 30.0;
  std::string tutor_directive =
      "You are a Socratic mathematics tutor. Never give the answer. Ask one short question "
      "at a time that helps the learner connect their earlier insight to the current problem.";
};

std::shared_ptr<LlmClient> make_llm_client(const LlmConfig& config);

}  // namespace irec
