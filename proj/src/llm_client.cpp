#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "http_util.hpp"
#include "irec/error.hpp"
#include "irec/llm.hpp"
#include "irec/text.hpp"

namespace irec {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + sep.size();
  }
  return out;
}

std::vector<std::string> hashtags(std::string_view note) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < note.size(); ++i) {
    if (note[i] != '#' || (i > 0 && !std::isspace(static_cast<unsigned char>(note[i - 1])))) continue;
    std::size_t j = i + 1;
    while (j < note.size() && (std::isalnum(static_cast<unsigned char>(note[j])) || note[j] == '-' ||
                               note[j] == '_')) {
      ++j;
    }
    if (j > i + 1) out.emplace_back(note.substr(i + 1, j - i - 1));
    i = j;
  }
  return out;
}

std::set<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

json parse_insight_default(const json& req) {
  const auto note = req.value("note", std::string{});
  json tags = json::array();
  std::string problem;
  std::string insight;
  const auto parts = split(note, "|||");
  if (parts.size() >= 2) {
    problem = parts[0];
    insight = parts[1];
    if (parts.size() >= 3) {
      for (const auto& t : split(parts[2], ",")) {
        if (!t.empty()) tags.push_back(t);
      }
    }
  } else {
    const auto trimmed = trim(note);
    const auto nl = trimmed.find('\n');
    problem = trim(trimmed.substr(0, nl));
    insight = nl == std::string::npos ? trimmed : trim(trimmed.substr(nl + 1));
  }
  for (const auto& h : hashtags(note)) tags.push_back(h);
  return {{"problem", problem}, {"insight", insight}, {"tags", tags}};
}

json assess_default(const json& req) {
  const auto a = tokenize(req.value("new_problem", std::string{}));
  const auto b = tokenize(req.value("card_problem", std::string{}));
  if (a == b) return {{"score", 0}, {"rationale", "The problems are essentially identical."}};
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.contains(t) ? 1 : 0;
  const std::size_t uni = sa.size() + sb.size() - common;
  const double jaccard = uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
  int score = 3;
  if (jaccard >= 0.6) score = 1;
  else if (jaccard >= 0.3) score = 2;
  std::ostringstream why;
  why << "Token overlap " << common << "/" << uni << ".";
  return {{"score", score}, {"rationale", why.str()}};
}

json branch_select_default(const json& req) {
  json items = json::array();
  for (const auto& item : req.at("items")) {
    const auto words = token_set(item.value("tag", std::string{}) + " " +
                                 item.value("context", std::string{}));
    std::string best;
    std::size_t best_hits = 0;
    for (const auto& branch : req.at("branches")) {
      std::size_t hits = 0;
      for (const auto& t : token_set(branch.value("name", std::string{}))) hits += words.contains(t);
      const auto id = branch.value("id", std::string{});
      if (hits > best_hits || (hits == best_hits && hits > 0 && id < best)) {
        best_hits = hits;
        best = id;
      }
    }
    json ids = json::array();
    if (best_hits > 0) ids.push_back(best);
    items.push_back({{"tag", item.value("tag", std::string{})}, {"branch_ids", ids}});
  }
  return {{"items", items}};
}

json precise_select_default(const json& req) {
  const auto tag = req.value("tag", std::string{});
  const auto key = normalize_name(tag);
  for (const auto& c : req.at("candidates")) {
    if (normalize_name(c.value("name", std::string{})) == key) {
      return {{"action", "map"}, {"target_id", c.value("id", std::string{})}};
    }
  }
  return {{"action", "create"}, {"parent_id", req.value("branch", std::string{})}, {"name", tag}};
}

json inquiry_default(const json& req) {
  const auto current = req.value("current_problem", std::string{});
  const auto& history = req.at("history");
  std::string last_user;
  for (const auto& turn : history) {
    if (turn.value("role", std::string{}) == "user") last_user = turn.value("text", std::string{});
  }
  std::string reply;
  if (last_user.empty()) {
    reply = "I see you worked through \"" + req.value("recalled_problem", std::string{}) +
            "\" before and wrote: \"" + req.value("recalled_insight", std::string{}) +
            "\". Can you find parts with a similar relationship in the current problem, \"" +
            current + "\"?";
  } else {
    reply = "You said: \"" + last_user + "\". Which part of \"" + current +
            "\" would you substitute, and what does its derivative look like?";
  }
  return {{"reply", reply}};
}

}  // namespace

std::string stub_default_response(const json& request) {
  const auto task = request.value("task", std::string{});
  if (task == "parse_insight") return parse_insight_default(request).dump();
  if (task == "assess_similarity") return assess_default(request).dump();
  if (task == "branch_select") return branch_select_default(request).dump();
  if (task == "precise_select") return precise_select_default(request).dump();
  if (task == "guided_inquiry") return inquiry_default(request).dump();
  return json{{"error", "unsupported task"}}.dump();
}

StubLlm::StubLlm(const std::filesystem::path& fixture_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(fixture_dir)) {
    throw Error(ErrorCode::InvalidConfig, "stub fixture directory not found: " + fixture_dir.string());
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  for (const auto& entry : fs::directory_iterator(fixture_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const auto stem = entry.path().stem().string();
    if (stem == "rules") continue;
    fixtures_[stem] = slurp(entry.path());
  }
  const auto rules_path = fixture_dir / "rules.json";
  if (fs::exists(rules_path)) {
    try {
      for (const auto& r : json::parse(slurp(rules_path))) {
        Rule rule;
        rule.task = r.value("task", std::string{});
        rule.contains = r.value("contains", std::vector<std::string>{});
        rule.unavailable = r.value("unavailable", false);
        if (r.contains("raw")) rule.raw_response = r.at("raw").get<std::string>();
        else if (r.contains("response")) rule.raw_response = r.at("response").dump();
        rules_.push_back(std::move(rule));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "bad rules.json: " + std::string(e.what()));
    }
  }
}

std::string StubLlm::digest(const json& request) { return to_hex(fnv1a64(request.dump())); }

void StubLlm::add_fixture(const std::string& digest, std::string raw_response) {
  std::lock_guard lock(mutex_);
  fixtures_[digest] = std::move(raw_response);
}

void StubLlm::add_rule(Rule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
}

void StubLlm::set_available(bool available) {
  std::lock_guard lock(mutex_);
  available_ = available;
}

std::string StubLlm::complete(const json& request) {
  const auto text = request.dump();
  const auto task = request.value("task", std::string{});
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  if (!available_) throw Error(ErrorCode::LlmUnavailable, "stub provider switched off");
  if (auto it = fixtures_.find(to_hex(fnv1a64(text))); it != fixtures_.end()) return it->second;
  for (const auto& rule : rules_) {
    if (!rule.task.empty() && rule.task != task) continue;
    const bool match = std::all_of(rule.contains.begin(), rule.contains.end(),
                                   [&](const std::string& s) { return text.find(s) != std::string::npos; });
    if (!match) continue;
    if (rule.unavailable) throw Error(ErrorCode::LlmUnavailable, "scripted outage for " + task);
    return rule.raw_response;
  }
  return stub_default_response(request);
}

std::vector<json> StubLlm::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t StubLlm::call_count(const std::string& task) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(requests_.begin(), requests_.end(), [&](const json& r) {
    return r.value("task", std::string{}) == task;
  }));
}

void StubLlm::clear_requests() {
  std::lock_guard lock(mutex_);
  requests_.clear();
}

HttpLlm::HttpLlm(std::string endpoint, std::string model, std::string system_directive,
                 std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      system_directive_(std::move(system_directive)),
      timeout_(timeout) {}

std::string HttpLlm::complete(const json& request) {
  const auto url = detail::split_url(endpoint_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  const json body = {{"model", model_},
                     {"messages",
                      {{{"role", "system"}, {"content", system_directive_}},
                       {{"role", "user"}, {"content", request.dump()}}}}};
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::LlmUnavailable, httplib::to_string(res.error()));
  if (res->status != 200) throw Error(ErrorCode::LlmUnavailable, "HTTP " + std::to_string(res->status));
  try {
    const auto parsed = json::parse(res->body);
    if (parsed.contains("choices")) {
      return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    }
  } catch (const json::exception&) {
    // Not a chat envelope; hand the body to the gateway as-is.
  }
  return res->body;
}

std::shared_ptr<LlmClient> make_llm_client(const LlmConfig& config) {
  if (config.provider == "stub") {
    if (config.fixtures.empty()) return std::make_shared<StubLlm>();
    return std::make_shared<StubLlm>(config.fixtures);
  }
  if (config.provider == "external") {
    return std::make_shared<HttpLlm>(
        config.endpoint, config.model,
        "Answer with a single JSON object that follows the request's task contract.",
        std::chrono::milliseconds(static_cast<long>(config.timeout_s * 1000)));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown llm.provider: " + config.provider);
}

}  // namespace irec
