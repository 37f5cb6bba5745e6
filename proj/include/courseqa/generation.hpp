#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "courseqa/embedding.hpp"
#include "courseqa/error.hpp"
#include "courseqa/prompt.hpp"
#include "json.hpp"

namespace courseqa::generation {

struct GenerationParams {
  int max_length = 2048;
  int max_new_tokens = 1024;
  double top_p = 1.0;
  int top_k = 50;
  double temperature = 0.3;

  void validate() const;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};

  std::chrono::milliseconds backoff_before(int attempt) const;  // attempt >= 2
};

struct ProviderConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string api_key_env = "COURSEQA_API_KEY";
  std::string model;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::vector<std::string> allowed_hosts{"localhost", "127.0.0.1"};
  bool send_top_k = true;  // forwarded as a non-standard "top_k" body field
  int max_in_flight = 4;

  void validate() const;
};

// Raised after a request has exhausted its retries; `status` is 0 for
// transport failures.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, int status, int attempts)
      : Error(message, "provider"), status_(status), attempts_(attempts) {}
  int status() const noexcept { return status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int status_;
  int attempts_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  // Requests marked false are only sent to allow-listed hosts.
  bool anonymized = true;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // Content of the first choice. Implementations must be callable from
  // several threads at once.
  virtual std::string complete(const ChatRequest& request, const GenerationParams& params) = 0;
  virtual std::string describe() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string describe() const = 0;
};

// OpenAI-compatible HTTP wire format.
nlohmann::json chat_request_body(const ProviderConfig& config, const ChatRequest& request,
                                 const GenerationParams& params);
std::string parse_chat_response(const nlohmann::json& response);
nlohmann::json embedding_request_body(const ProviderConfig& config, const std::vector<std::string>& texts);
std::vector<EmbeddingVector> parse_embedding_response(const nlohmann::json& response, std::size_t expected);

class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderConfig config);
  std::string complete(const ChatRequest& request, const GenerationParams& params) override;
  std::string describe() const override;

 private:
  ProviderConfig config_;
};

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(ProviderConfig config);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string describe() const override;

 private:
  ProviderConfig config_;
};

// Offline chat stand-in.
//   echo:  returns the last `tail_chars` bytes of the last message.
//   judge: answers a judge prompt with "- <Metric>: <0-2>" derived from token
//          overlap between the answer and the ground truth.
//   fixed: always returns `fixed_text`.
class StubChatProvider final : public ChatProvider {
 public:
  enum class Mode { echo, judge, fixed };
  explicit StubChatProvider(Mode mode, std::string fixed_text = {}, std::size_t tail_chars = 256);
  std::string complete(const ChatRequest& request, const GenerationParams& params) override;
  std::string describe() const override;

 private:
  Mode mode_;
  std::string fixed_text_;
  std::size_t tail_chars_;
};

// Hashed bag of words: tokens are FNV-1a hashed into `dim` buckets, counted,
// and L2-normalized in a fixed order, so vectors are bitwise reproducible.
class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(std::size_t dim = 256);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string describe() const override;
  EmbeddingVector embed_one(std::string_view text) const;

 private:
  std::size_t dim_;
};

// ceil(chars / 4)
int estimate_tokens(std::string_view text);

// Sends the rendered prompt as one user message. Prompts whose estimated size
// leaves no room for max_new_tokens inside max_length are rejected.
std::string generate_answer(ChatProvider& provider, const prompt::PromptBundle& prompt,
                            const GenerationParams& params, bool anonymized = true);

// Runs every request with at most `max_in_flight` outstanding; result i
// belongs to request i. The first failure is rethrown after all finish.
std::vector<std::string> complete_batch(ChatProvider& provider, const std::vector<ChatRequest>& requests,
                                        const GenerationParams& params, int max_in_flight = 4);

// One vector per text, order kept; throws on an empty batch or dimension drift.
std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider, const std::vector<std::string>& texts);

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string host;
  std::string path_prefix;  // "" or "/v1"
};
ParsedUrl parse_base_url(const std::string& base_url);

}  // namespace courseqa::generation
