#include "courseqa/generation.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "courseqa/text.hpp"

namespace courseqa::generation {

using nlohmann::json;

void GenerationParams::validate() const {
  if (!(temperature > 0.0)) throw Error("temperature must be positive", "invalid_config");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("top_p must be in (0, 1]", "invalid_config");
  if (top_k < 0) throw Error("top_k must be non-negative", "invalid_config");
  if (max_new_tokens <= 0 || max_new_tokens >= max_length) {
    throw Error("max_new_tokens must be positive and smaller than max_length", "invalid_config");
  }
}

std::chrono::milliseconds RetryPolicy::backoff_before(int attempt) const {
  const double factor = std::pow(multiplier, std::max(0, attempt - 2));
  const auto wait = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(initial_backoff.count()) * factor));
  return std::min(wait, max_backoff);
}

void ProviderConfig::validate() const {
  if (timeout.count() <= 0) throw Error("provider timeout must be positive", "invalid_config");
  if (retry.max_attempts < 1) throw Error("retry attempts must be at least 1", "invalid_config");
  if (max_in_flight < 1) throw Error("max_in_flight must be at least 1", "invalid_config");
}

ParsedUrl parse_base_url(const std::string& base_url) {
  static const std::regex pattern(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, pattern)) throw Error("invalid base_url '" + base_url + "'", "invalid_config");
  ParsedUrl url;
  url.host = m[2].str();
  url.scheme_host_port = m[1].str() + "://" + url.host + m[3].str();
  url.path_prefix = m[4].str();
  while (!url.path_prefix.empty() && url.path_prefix.back() == '/') url.path_prefix.pop_back();
  return url;
}

// ---------------------------------------------------------------------------
// Wire format

json chat_request_body(const ProviderConfig& config, const ChatRequest& request, const GenerationParams& params) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body{{"model", config.model},
            {"messages", messages},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_new_tokens}};
  if (config.send_top_k) body["top_k"] = params.top_k;
  return body;
}

std::string parse_chat_response(const json& response) {
  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) {
    throw Error("empty completion", "empty_completion");
  }
  const json& first = choices->front();
  std::string content;
  if (first.contains("message") && first["message"].contains("content") && first["message"]["content"].is_string()) {
    content = first["message"]["content"].get<std::string>();
  }
  if (content.empty()) throw Error("empty completion", "empty_completion");
  return content;
}

json embedding_request_body(const ProviderConfig& config, const std::vector<std::string>& texts) {
  return {{"model", config.model}, {"input", texts}};
}

std::vector<EmbeddingVector> parse_embedding_response(const json& response, std::size_t expected) {
  const auto data = response.find("data");
  if (data == response.end() || !data->is_array()) throw Error("embedding response has no data array", "bad_response");
  std::vector<std::pair<std::size_t, EmbeddingVector>> indexed;
  for (std::size_t i = 0; i < data->size(); ++i) {
    const json& item = (*data)[i];
    const std::size_t index = item.contains("index") ? item["index"].get<std::size_t>() : i;
    indexed.emplace_back(index, EmbeddingVector{item.at("embedding").get<std::vector<double>>()});
  }
  std::sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (indexed.size() != expected) {
    throw Error("embedding response has " + std::to_string(indexed.size()) + " vectors for " +
                    std::to_string(expected) + " inputs", "bad_response");
  }
  std::vector<EmbeddingVector> out;
  for (auto& [index, vec] : indexed) out.push_back(std::move(vec));
  return out;
}

// ---------------------------------------------------------------------------
// HTTP transport

namespace {

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

json post_with_retries(const ProviderConfig& config, const std::string& endpoint, const json& body, bool anonymized) {
  config.validate();
  const ParsedUrl url = parse_base_url(config.base_url);
  if (!anonymized &&
      std::find(config.allowed_hosts.begin(), config.allowed_hosts.end(), url.host) == config.allowed_hosts.end()) {
    throw Error("refusing to send non-anonymized content to host '" + url.host + "' outside the allow-list",
                "privacy_guard");
  }
  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - seconds);

  int status = 0;
  std::string detail;
  for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(config.retry.backoff_before(attempt));
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    const auto result = client.Post(url.path_prefix + endpoint, headers, payload, "application/json");
    if (!result) {
      status = 0;
      detail = httplib::to_string(result.error());
    } else {
      status = result->status;
      if (status >= 200 && status < 300) {
        try {
          return json::parse(result->body);
        } catch (const json::parse_error& e) {
          throw ProviderError(std::string("malformed JSON from provider: ") + e.what(), status, attempt);
        }
      }
      detail = result->body.substr(0, 200);
    }
    if (!retryable(status)) {
      throw ProviderError("request to " + endpoint + " failed with status " + std::to_string(status) + " after " +
                              std::to_string(attempt) + " attempt(s): " + detail, status, attempt);
    }
  }
  throw ProviderError("request to " + endpoint + " failed with status " + std::to_string(status) + " after " +
                          std::to_string(config.retry.max_attempts) + " attempt(s): " + detail,
                      status, config.retry.max_attempts);
}

}  // namespace

HttpChatProvider::HttpChatProvider(ProviderConfig config) : config_(std::move(config)) { config_.validate(); }

std::string HttpChatProvider::complete(const ChatRequest& request, const GenerationParams& params) {
  return parse_chat_response(
      post_with_retries(config_, "/chat/completions", chat_request_body(config_, request, params), request.anonymized));
}

std::string HttpChatProvider::describe() const { return "http-chat:" + config_.base_url + ":" + config_.model; }

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderConfig config) : config_(std::move(config)) { config_.validate(); }

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  return parse_embedding_response(
      post_with_retries(config_, "/embeddings", embedding_request_body(config_, texts), true), texts.size());
}

std::string HttpEmbeddingProvider::describe() const {
  return "http-embeddings:" + config_.base_url + ":" + config_.model;
}

// ---------------------------------------------------------------------------
// Stubs

namespace {

std::string section(std::string_view text, std::string_view open, std::string_view close) {
  const std::size_t a = text.find(open);
  if (a == std::string_view::npos) return {};
  const std::size_t begin = a + open.size();
  const std::size_t b = text.find(close, begin);
  return std::string(text.substr(begin, b == std::string_view::npos ? std::string_view::npos : b - begin));
}

int judge_score(std::string_view metric, const std::string& ground_truth, const std::string& answer) {
  const auto gt_tokens = text::tokenize(ground_truth);
  const auto ans_tokens = text::tokenize(answer);
  const std::set<std::string> gt(gt_tokens.begin(), gt_tokens.end());
  const std::set<std::string> ans(ans_tokens.begin(), ans_tokens.end());
  if (gt.empty() || ans.empty()) return 0;
  std::size_t common = 0;
  for (const auto& t : ans) common += gt.count(t);
  if (metric == "Accuracy") {
    const double recall = static_cast<double>(common) / static_cast<double>(gt.size());
    return recall >= 0.5 ? 2 : recall >= 0.2 ? 1 : 0;
  }
  const double f1 = 2.0 * static_cast<double>(common) / static_cast<double>(gt.size() + ans.size());
  return f1 >= 0.4 ? 2 : f1 >= 0.15 ? 1 : 0;
}

}  // namespace

StubChatProvider::StubChatProvider(Mode mode, std::string fixed_text, std::size_t tail_chars)
    : mode_(mode), fixed_text_(std::move(fixed_text)), tail_chars_(tail_chars) {}

std::string StubChatProvider::complete(const ChatRequest& request, const GenerationParams&) {
  const std::string last = request.messages.empty() ? std::string() : request.messages.back().content;
  switch (mode_) {
    case Mode::echo:
      return last.size() > tail_chars_ ? last.substr(last.size() - tail_chars_) : last;
    case Mode::fixed:
      return fixed_text_;
    case Mode::judge: {
      const std::string ground_truth = section(last, "\nGround Truth Answer:\n\n", "\n\nAnswer:\n\n");
      const std::string answer = section(last, "\n\nAnswer:\n\n", "\n\nEvaluation Form (scores ONLY):");
      std::string metric = section(last, "Evaluation Form (scores ONLY):\n\n- ", "\n");
      if (metric.empty()) metric = "Score";
      return "- " + metric + ": " + std::to_string(judge_score(metric, ground_truth, answer));
    }
  }
  return {};
}

std::string StubChatProvider::describe() const {
  switch (mode_) {
    case Mode::echo: return "stub-chat:echo";
    case Mode::judge: return "stub-chat:judge";
    case Mode::fixed: return "stub-chat:fixed";
  }
  return "stub-chat";
}

StubEmbeddingProvider::StubEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error("stub embedding dimension must be positive", "invalid_config");
}

EmbeddingVector StubEmbeddingProvider::embed_one(std::string_view input) const {
  std::vector<double> counts(dim_, 0.0);
  auto tokens = text::tokenize(input);
  if (tokens.empty()) tokens.emplace_back();
  for (const auto& token : tokens) counts[text::fnv1a64(token) % dim_] += 1.0;
  double sq = 0.0;
  for (double c : counts) sq += c * c;
  const double norm = std::sqrt(sq);
  for (double& c : counts) c /= norm;
  return EmbeddingVector{std::move(counts)};
}

std::vector<EmbeddingVector> StubEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::string StubEmbeddingProvider::describe() const { return "stub-embeddings:hashed-bow-" + std::to_string(dim_); }

// ---------------------------------------------------------------------------

int estimate_tokens(std::string_view text) { return static_cast<int>((text.size() + 3) / 4); }

std::string generate_answer(ChatProvider& provider, const prompt::PromptBundle& prompt, const GenerationParams& params,
                            bool anonymized) {
  params.validate();
  const int budget = params.max_length - params.max_new_tokens;
  const int estimated = estimate_tokens(prompt.rendered);
  if (estimated > budget) {
    throw Error("prompt needs ~" + std::to_string(estimated) + " tokens but only " + std::to_string(budget) +
                    " fit before max_new_tokens", "prompt_too_long");
  }
  ChatRequest request{{{"user", prompt.rendered}}, anonymized};
  std::string answer = provider.complete(request, params);
  if (answer.empty()) throw Error("empty completion", "empty_completion");
  return answer;
}

std::vector<std::string> complete_batch(ChatProvider& provider, const std::vector<ChatRequest>& requests,
                                        const GenerationParams& params, int max_in_flight) {
  if (max_in_flight < 1) throw Error("max_in_flight must be at least 1", "invalid_argument");
  std::vector<std::string> results(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i] = provider.complete(requests[i], params);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), requests.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return results;
}

std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider, const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error("no texts to embed", "invalid_argument");
  auto vectors = provider.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                    std::to_string(texts.size()) + " texts", "bad_response");
  }
  const std::size_t dim = vectors.front().dim();
  for (const auto& v : vectors) {
    if (v.dim() != dim || dim == 0) throw Error("embedding dimension drift within a batch", "dim_mismatch");
  }
  return vectors;
}

}  // namespace courseqa::generation
