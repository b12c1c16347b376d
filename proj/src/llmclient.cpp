#include "dlap/llmclient.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <thread>

#include "dlap/concurrency.hpp"
#include "dlap/error.hpp"
#include "dlap/hashing.hpp"
#include "dlap/prompt_templates.hpp"

namespace dlap::llm {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool retryable_status(int status) {
  return status == 429 || status == 500 || status == 502 || status == 503 || status == 504;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ordered_json messages_json(const std::vector<ChatMessage>& messages) {
  ordered_json arr = ordered_json::array();
  for (const auto& m : messages) {
    ordered_json o;
    o["role"] = m.role;
    o["content"] = m.content;
    arr.push_back(std::move(o));
  }
  return arr;
}

std::string snippet(const std::string& body) {
  return body.size() > 200 ? body.substr(0, 200) + "..." : body;
}

}  // namespace

void LlmConfig::validate() const {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  if (retry.max_attempts < 1) throw Error(ErrorCode::kInvalidArgument, "retry attempts must be >= 1");
  if (max_in_flight == 0) throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be >= 1");
  if (max_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  if (transport == TransportKind::kMock && mock_script.empty())
    throw Error(ErrorCode::kInvalidArgument, "mock transport needs a script path");
  if (transport == TransportKind::kLive && endpoint.empty())
    throw Error(ErrorCode::kInvalidArgument, "live transport needs an endpoint");
}

std::string prompt_hash(const std::vector<ChatMessage>& messages) {
  return sha256_hex(messages_json(messages).dump());
}

std::vector<ChatMessage> detection_messages(const std::string& prompt) {
  return {{"system", std::string(promptgen::templates::kDetectionPersona)}, {"user", prompt}};
}

// ---- transports ----------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> auth_headers(const LlmConfig& c) {
  std::vector<std::pair<std::string, std::string>> h;
  if (const char* key = c.api_key_env.empty() ? nullptr : std::getenv(c.api_key_env.c_str());
      key != nullptr && *key != '\0')
    h.emplace_back("Authorization", std::string("Bearer ") + key);
  return h;
}

}  // namespace

LiveTransport::LiveTransport(const LlmConfig& config)
    : endpoint_(config.endpoint, config.timeout, auth_headers(config)) {}

net::HttpResponse LiveTransport::post(const std::string& request_json) {
  return endpoint_.post_json("/chat/completions", request_json);
}

MockTransport::MockTransport(std::map<std::string, std::string> script) : script_(std::move(script)) {}

std::unique_ptr<MockTransport> MockTransport::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kFormat, path + ": mock script must be a JSON array");
  std::map<std::string, std::string> script;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("prompt_hash") || !e.contains("response") ||
        !e["prompt_hash"].is_string() || !e["response"].is_string())
      throw Error(ErrorCode::kFormat,
                  path + ": entry " + std::to_string(i) + " needs string prompt_hash and response");
    script[e["prompt_hash"].get<std::string>()] = e["response"].get<std::string>();
  }
  return std::make_unique<MockTransport>(std::move(script));
}

std::string MockTransport::script_to_json(const std::map<std::string, std::string>& script) {
  ordered_json arr = ordered_json::array();
  for (const auto& [hash, response] : script) {
    ordered_json o;
    o["prompt_hash"] = hash;
    o["response"] = response;
    arr.push_back(std::move(o));
  }
  return arr.dump(1);
}

net::HttpResponse MockTransport::post(const std::string& request_json) {
  json req;
  try {
    req = json::parse(request_json);
  } catch (const json::parse_error&) {
    return {400, R"({"error":{"message":"malformed request"}})"};
  }
  std::vector<ChatMessage> messages;
  for (const auto& m : req.value("messages", json::array()))
    messages.push_back({m.value("role", ""), m.value("content", "")});
  const auto hash = prompt_hash(messages);
  auto it = script_.find(hash);
  if (it == script_.end())
    return {404, json{{"error", {{"message", "no scripted response for prompt hash " + hash}}}}.dump()};
  long prompt_chars = 0;
  for (const auto& m : messages) prompt_chars += static_cast<long>(m.content.size());
  json reply = {
      {"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", it->second}}}}})},
      {"usage",
       {{"prompt_tokens", (prompt_chars + 3) / 4},
        {"completion_tokens", static_cast<long>(it->second.size() + 3) / 4}}}};
  return {200, reply.dump()};
}

// ---- client --------------------------------------------------------------

struct LlmClient::Limits {
  Limits(std::size_t in_flight, double rps)
      : in_flight(in_flight), bucket(rps, std::max(1.0, rps)) {}
  Semaphore in_flight;
  TokenBucket bucket;
};

namespace {

std::shared_ptr<ChatTransport> transport_for(const LlmConfig& config) {
  config.validate();
  if (config.transport == TransportKind::kMock) return MockTransport::load(config.mock_script);
  return std::make_shared<LiveTransport>(config);
}

}  // namespace

LlmClient::LlmClient(LlmConfig config)
    : LlmClient(config, transport_for(config)) {}

LlmClient::LlmClient(LlmConfig config, std::shared_ptr<ChatTransport> transport, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      limits_(std::make_unique<Limits>(config_.max_in_flight, config_.requests_per_second)) {
  if (config_.retry.max_attempts < 1)
    throw Error(ErrorCode::kInvalidArgument, "retry attempts must be >= 1");
  if (!transport_) throw Error(ErrorCode::kInvalidArgument, "LLM client needs a transport");
}

LlmClient::~LlmClient() = default;

LlmResponse LlmClient::chat(const std::vector<ChatMessage>& messages) const {
  ordered_json req;
  req["model"] = config_.model;
  req["messages"] = messages_json(messages);
  req["temperature"] = config_.temperature;
  req["max_tokens"] = config_.max_tokens;
  const std::string body = req.dump();

  const auto started = std::chrono::steady_clock::now();
  std::string log;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    net::HttpResponse reply;
    bool transport_failed = false;
    {
      limits_->bucket.take();
      SemaphoreGuard guard(limits_->in_flight);
      try {
        reply = transport_->post(body);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kTransport) throw;
        transport_failed = true;
        log += "attempt " + std::to_string(attempt) + ": " + e.what() + "; ";
      }
    }
    if (!transport_failed) {
      if (reply.status == 200) {
        LlmResponse out;
        try {
          const auto j = json::parse(reply.body);
          out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
          if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
            out.usage.prompt = u->value("prompt_tokens", 0L);
            out.usage.completion = u->value("completion_tokens", 0L);
          }
        } catch (const json::exception& e) {
          throw Error(ErrorCode::kProtocol,
                      std::string("malformed chat-completions reply: ") + e.what());
        }
        out.attempts = attempt;
        out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return out;
      }
      if (!retryable_status(reply.status))
        throw Error(ErrorCode::kProtocol, "chat completion failed with HTTP " +
                                              std::to_string(reply.status) + ": " + snippet(reply.body));
      log += "attempt " + std::to_string(attempt) + ": HTTP " + std::to_string(reply.status) + "; ";
    }
    if (attempt < config_.retry.max_attempts) {
      auto delay = config_.retry.backoff_base * (1LL << std::min(attempt - 1, 20));
      sleeper_(std::min<std::chrono::milliseconds>(delay, config_.retry.backoff_cap));
    }
  }
  throw Error(ErrorCode::kTransport, "chat completion gave up after " +
                                         std::to_string(config_.retry.max_attempts) +
                                         " attempts: " + log);
}

LlmResponse LlmClient::detect(const std::string& prompt) const {
  return chat(detection_messages(prompt));
}

std::vector<LlmResponse> LlmClient::converse(const std::vector<std::string>& user_turns) const {
  std::vector<ChatMessage> messages = {
      {"system", std::string(promptgen::templates::kDetectionPersona)}};
  std::vector<LlmResponse> out;
  for (const auto& turn : user_turns) {
    messages.push_back({"user", turn});
    out.push_back(chat(messages));
    messages.push_back({"assistant", out.back().text});
  }
  return out;
}

// ---- verdicts ------------------------------------------------------------

const char* to_string(Decision d) {
  switch (d) {
    case Decision::kYes: return "yes";
    case Decision::kNo: return "no";
    case Decision::kUnparseable: return "unparseable";
  }
  return "?";
}

namespace {

bool markup(unsigned char c) {
  return std::isspace(c) || c == '*' || c == '#' || c == '>' || c == '`' || c == '_' || c == '"' ||
         c == '\'' || c == '-' || c == '[' || c == '(' || c == '~' || c == '|';
}

// Punctuation, whitespace and em/en dashes between the verdict word and the
// explanation.
std::size_t skip_separators(std::string_view s, std::size_t i) {
  for (;;) {
    if (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) ||
                         std::string_view(".,:;!-*)]").find(s[i]) != std::string_view::npos)) {
      ++i;
    } else if (s.substr(i, 3) == "\xE2\x80\x94" || s.substr(i, 3) == "\xE2\x80\x93") {
      i += 3;
    } else {
      return i;
    }
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Verdict parse_verdict(std::string_view text) {
  Verdict v;
  std::size_t i = 0;
  auto read_word = [&](std::size_t& pos) {
    while (pos < text.size() && markup(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos]))) ++pos;
    return lower(text.substr(start, pos - start));
  };

  auto word = read_word(i);
  // "Answer: Yes", "**Verdict**: no"
  if (word == "answer" || word == "verdict") {
    std::size_t j = i;
    while (j < text.size() && (text[j] == '*' || text[j] == ' ')) ++j;
    if (j < text.size() && text[j] == ':') {
      i = j + 1;
      word = read_word(i);
    }
  }
  if (word == "yes" || word == "no") {
    v.decision = word == "yes" ? Decision::kYes : Decision::kNo;
    v.explanation = trim(text.substr(skip_separators(text, i)));
    return v;
  }

  const auto body = trim(text);
  const auto end = body.find_first_of(".!?\n");
  const auto first = lower(std::string_view(body).substr(0, end));
  static constexpr std::string_view kNegative[] = {
      "is not vulnerable", "isn't vulnerable", "not vulnerable", "is not buggy", "isn't buggy",
      "not buggy", "no vulnerabilit", "does not contain any vulnerab",
      "doesn't contain any vulnerab"};
  static constexpr std::string_view kPositive[] = {"is vulnerable", "is buggy", "buggy",
                                                   "contains a vulnerability"};
  for (auto p : kNegative)
    if (first.find(p) != std::string::npos) {
      v.decision = Decision::kNo;
      v.explanation = body;
      return v;
    }
  for (auto p : kPositive)
    if (first.find(p) != std::string::npos) {
      v.decision = Decision::kYes;
      v.explanation = body;
      return v;
    }
  v.explanation = body;
  return v;
}

Verdict parse_verdict(const LlmResponse& response) {
  auto v = parse_verdict(std::string_view(response.text));
  v.raw = response;
  return v;
}

}  // namespace dlap::llm
