#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dlap/http.hpp"

namespace dlap::llm {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{20000};
};

enum class TransportKind { kLive, kMock };

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo-0125";
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  double requests_per_second = 0.0;  // 0 = unlimited
  RetryPolicy retry;
  TransportKind transport = TransportKind::kMock;
  std::string mock_script;  // path, mock transport only
  // Name of the environment variable holding the API key; the key itself
  // is never stored.
  std::string api_key_env = "OPENAI_API_KEY";

  void validate() const;
};

struct ChatMessage {
  std::string role;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct TokenUsage {
  long prompt = 0;
  long completion = 0;
};

struct LlmResponse {
  std::string text;
  TokenUsage usage;
  std::chrono::milliseconds latency{0};
  int attempts = 0;
};

/// SHA-256 over the canonical JSON of the message list. Keys mock scripts.
std::string prompt_hash(const std::vector<ChatMessage>& messages);

/// System persona followed by one user turn.
std::vector<ChatMessage> detection_messages(const std::string& prompt);

/// Posts one chat-completions request body and returns the raw HTTP reply.
/// Network failures throw Error(kTransport).
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual net::HttpResponse post(const std::string& request_json) = 0;
};

/// `POST {endpoint}/chat/completions`.
class LiveTransport final : public ChatTransport {
 public:
  explicit LiveTransport(const LlmConfig& config);
  net::HttpResponse post(const std::string& request_json) override;

 private:
  net::HttpEndpoint endpoint_;
};

/// Replays scripted replies keyed by prompt_hash(messages). Unknown hashes
/// answer HTTP 404, which the client reports as a protocol error.
class MockTransport final : public ChatTransport {
 public:
  explicit MockTransport(std::map<std::string, std::string> script);
  /// JSON array of {"prompt_hash": str, "response": str}.
  static std::unique_ptr<MockTransport> load(const std::string& path);
  static std::string script_to_json(const std::map<std::string, std::string>& script);

  net::HttpResponse post(const std::string& request_json) override;

 private:
  std::map<std::string, std::string> script_;
};

/// Chat-completions client: bounded in-flight requests, optional token-bucket
/// rate limit, exponential backoff on transport failures and 429/5xx.
/// Shareable across threads.
class LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// Builds the transport named by the config.
  explicit LlmClient(LlmConfig config);
  LlmClient(LlmConfig config, std::shared_ptr<ChatTransport> transport, Sleeper sleeper = {});
  ~LlmClient();

  /// One round trip: detection persona as system, `prompt` as user.
  LlmResponse detect(const std::string& prompt) const;
  LlmResponse chat(const std::vector<ChatMessage>& messages) const;
  /// Sends user turns one after another, feeding each reply back as the
  /// assistant turn. Returns one response per turn.
  std::vector<LlmResponse> converse(const std::vector<std::string>& user_turns) const;

  const LlmConfig& config() const { return config_; }

 private:
  struct Limits;
  LlmConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  Sleeper sleeper_;
  std::unique_ptr<Limits> limits_;
};

enum class Decision { kYes, kNo, kUnparseable };

const char* to_string(Decision d);

struct Verdict {
  Decision decision = Decision::kUnparseable;
  std::string explanation;
  LlmResponse raw;
};

/// Leading "yes"/"no" (case-insensitive, markup skipped) decides; otherwise
/// first-sentence phrases such as "is not vulnerable" / "is vulnerable".
/// Never throws.
Verdict parse_verdict(const LlmResponse& response);
Verdict parse_verdict(std::string_view text);

}  // namespace dlap::llm
