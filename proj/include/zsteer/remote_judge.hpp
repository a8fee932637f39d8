#pragma once

// Optional LLM judge over an OpenAI-style chat-completions endpoint.
//
// The request carries the task's fixed system prompt and the text to judge as
// the user message, at temperature 0. The reply content must be a JSON object
// {"label", "confidence", "reasons", "quotes"}.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "zsteer/binary_io.hpp"
#include "zsteer/error.hpp"
#include "zsteer/evaluation.hpp"
#include "zsteer/judge_prompts.hpp"

namespace zsteer {

enum class JudgeTask { ose, wikipol };

inline JudgeTask parse_judge_task(std::string_view name) {
  if (name == "ose") return JudgeTask::ose;
  if (name == "wikipol") return JudgeTask::wikipol;
  throw usage_error("unknown judge task \"" + std::string(name) + "\" (expected ose or wikipol)");
}

inline std::string_view system_prompt(JudgeTask task) {
  return task == JudgeTask::ose ? prompts::kOseSystem : prompts::kWikiPolSystem;
}

/// Full labels in report order, with their single-letter codes.
inline const std::vector<std::pair<std::string, std::string>>& label_alphabet(JudgeTask task) {
  static const std::vector<std::pair<std::string, std::string>> ose = {
      {"ELEMENTARY", "E"}, {"INTERMEDIATE", "I"}, {"ADVANCED", "A"}};
  static const std::vector<std::pair<std::string, std::string>> wikipol = {
      {"POLITE", "P"}, {"NEUTRAL", "N"}, {"IMPOLITE", "I"}};
  return task == JudgeTask::ose ? ose : wikipol;
}

/// Maps a full label or its code (case-insensitive) to the full label.
inline std::optional<std::string> canonical_label(JudgeTask task, std::string_view label) {
  std::string up(label);
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& [full, code] : label_alphabet(task)) {
    if (up == full || up == code) return full;
  }
  return std::nullopt;
}

struct JudgeEndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o-2024-08-06";
  std::string api_key_env = "ZSTEER_JUDGE_API_KEY";
  double temperature = 0.0;
  int max_retries = 3;
  int backoff_ms = 500;
  int timeout_seconds = 60;
  std::size_t max_concurrency = 4;
  /// Receives request/response bodies; credentials are never passed here.
  std::function<void(std::string_view)> log;

  static JudgeEndpointConfig from_json(const nlohmann::json& j) {
    JudgeEndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    if (c.temperature != 0.0) {
      throw usage_error("judge temperature is pinned to 0.0");
    }
    if (c.max_retries < 0 || c.backoff_ms < 0 || c.max_concurrency < 1) {
      throw usage_error("invalid judge retry/concurrency settings");
    }
    return c;
  }

  static JudgeEndpointConfig from_file(const std::filesystem::path& path) {
    try {
      return from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw usage_error("bad judge config " + path.string() + ": " + e.what());
    }
  }
};

inline nlohmann::json judge_request_body(std::string_view text, JudgeTask task, const JudgeEndpointConfig& cfg) {
  return {
      {"model", cfg.model},
      {"temperature", 0.0},
      {"messages",
       nlohmann::json::array({
           {{"role", "system"}, {"content", std::string(system_prompt(task))}},
           {{"role", "user"}, {"content", std::string(text)}},
       })},
  };
}

/// Parses a judge reply (the assistant message content). Tolerates code
/// fences or prose around the object; anything else is a parse error.
inline Judgment parse_judge_reply(std::string_view content, JudgeTask task) {
  auto fail = [&](const std::string& why) -> Judgment {
    throw external_error("judge parse error: " + why + "; raw reply: " + std::string(content));
  };
  const auto open = content.find('{');
  const auto close = content.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return fail("no JSON object");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception&) {
    return fail("invalid JSON");
  }
  if (!j.is_object() || !j.contains("label") || !j["label"].is_string()) return fail("missing label");
  if (!j.contains("confidence") || !j["confidence"].is_number()) return fail("missing confidence");
  auto label = canonical_label(task, j["label"].get<std::string>());
  if (!label) return fail("label \"" + j["label"].get<std::string>() + "\" not in task alphabet");
  Judgment out;
  out.label = *label;
  out.confidence = j["confidence"].get<double>();
  if (!(out.confidence >= 0.0 && out.confidence <= 1.0)) return fail("confidence outside [0, 1]");
  auto strings = [&](const char* key) {
    std::vector<std::string> v;
    if (j.contains(key) && j[key].is_array()) {
      for (const auto& x : j[key]) {
        if (x.is_string()) v.push_back(x.get<std::string>());
      }
    }
    return v;
  };
  out.reasons = strings("reasons");
  out.quotes = strings("quotes");
  return out;
}

/// Extracts choices[0].message.content from a chat-completions response.
inline std::string completion_content(std::string_view body) {
  try {
    auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw external_error("judge parse error: unexpected response shape; raw reply: " + std::string(body));
  }
}

class RemoteJudge {
public:
  explicit RemoteJudge(JudgeEndpointConfig cfg) : cfg_(std::move(cfg)) {}

  const JudgeEndpointConfig& config() const noexcept { return cfg_; }

  Judgment judge(std::string_view text, JudgeTask task) const {
    const std::string body = judge_request_body(text, task, cfg_).dump();
    log("request " + cfg_.base_url + cfg_.path + " " + body);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(cfg_.backoff_ms) << (attempt - 1)));
      }
      httplib::Client client(cfg_.base_url);
      client.set_connection_timeout(cfg_.timeout_seconds, 0);
      client.set_read_timeout(cfg_.timeout_seconds, 0);
      auto res = client.Post(cfg_.path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        log("attempt " + std::to_string(attempt) + " " + last_error);
        continue;
      }
      log("response " + std::to_string(res->status) + " " + res->body);
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw external_error("judge unavailable: HTTP " + std::to_string(res->status));
      }
      return parse_judge_reply(completion_content(res->body), task);
    }
    throw external_error("judge unavailable after " + std::to_string(cfg_.max_retries + 1) +
                         " attempts: " + last_error);
  }

  /// Judges many texts with at most cfg.max_concurrency requests in flight.
  /// Results come back in input order; the first failure is rethrown.
  std::vector<Judgment> judge_all(const std::vector<std::string>& texts, JudgeTask task) const {
    std::vector<Judgment> out(texts.size());
    std::vector<std::exception_ptr> errors(texts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < texts.size();) {
        try {
          out[i] = judge(texts[i], task);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto n_workers = std::min<std::size_t>(cfg_.max_concurrency, std::max<std::size_t>(1, texts.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return out;
  }

private:
  void log(const std::string& msg) const {
    if (!cfg_.log) return;
    std::lock_guard lock(log_mu_);
    cfg_.log(msg);
  }

  JudgeEndpointConfig cfg_;
  mutable std::mutex log_mu_;
};

}  // namespace zsteer
