#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "courseqa/chunker.hpp"
#include "courseqa/dedup.hpp"
#include "courseqa/generation.hpp"
#include "courseqa/retrieval.hpp"
#include "json.hpp"

namespace courseqa::pipeline {

struct ProviderSettings {
  std::string base_url;  // empty: use the offline stub
  std::string model;
  std::string api_key_env = "COURSEQA_API_KEY";
  int timeout_ms = 60000;
  int max_attempts = 3;
  int max_in_flight = 4;
  bool send_top_k = true;

  generation::ProviderConfig to_provider_config() const;
};

struct PipelineConfig {
  std::filesystem::path forum_export;
  std::filesystem::path documents_dir;
  std::filesystem::path index_dir;
  std::filesystem::path output_dir;

  chunker::ChunkerConfig chunker;
  retrieval::Bm25Params bm25;
  std::size_t dense_k = retrieval::kDefaultDenseK;
  std::size_t bm25_k = retrieval::kDefaultBm25K;
  double dedup_threshold = dedup::kDefaultThreshold;

  ProviderSettings chat;
  ProviderSettings embeddings;
  ProviderSettings judge;
  std::size_t stub_embedding_dim = 256;
  generation::GenerationParams generation;

  std::uint64_t seed = 0;
  bool offline = false;  // force stub providers

  void validate() const;
  nlohmann::json to_json() const;
  // sha256 of the canonical JSON form
  std::string hash() const;
};

// Artifact names inside output_dir / index_dir.
namespace artifacts {
inline constexpr const char* kQaPairs = "qa_pairs.jsonl";
inline constexpr const char* kCorpusStats = "corpus_stats.json";
inline constexpr const char* kDedupPairs = "qa_pairs.dedup.jsonl";
inline constexpr const char* kClusters = "clusters.json";
inline constexpr const char* kDpoPairs = "dpo_pairs.jsonl";
inline constexpr const char* kDpoMeta = "dpo_pairs.meta.jsonl";
inline constexpr const char* kSftPairs = "sft_pairs.jsonl";
inline constexpr const char* kIndexHeader = "index.json";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kEvalTable = "eval_report.txt";
inline constexpr const char* kEvalRecords = "eval_records.jsonl";
inline constexpr const char* kCallLog = "llm_calls.jsonl";
}  // namespace artifacts

// Exclusive advisory lock on <dir>/.courseqa.lock for the object's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

std::unique_ptr<generation::ChatProvider> make_chat_provider(const PipelineConfig& cfg);
std::unique_ptr<generation::ChatProvider> make_judge_provider(const PipelineConfig& cfg);
std::unique_ptr<generation::EmbeddingProvider> make_embedding_provider(const PipelineConfig& cfg);

struct CommandSummary {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> warnings;
  nlohmann::json details = nlohmann::json::object();
};

CommandSummary cmd_ingest(const PipelineConfig& cfg);
CommandSummary cmd_dedup(const PipelineConfig& cfg);
CommandSummary cmd_prefs(const PipelineConfig& cfg);
CommandSummary cmd_index(const PipelineConfig& cfg);

struct AskOptions {
  std::string subject;
  std::string body;
  bool no_rag = false;
  bool emit_bos = true;
  bool anonymized = true;
};

struct AskResult {
  std::string answer;
  std::string prompt;
  std::string prompt_sha256;
  retrieval::RetrievedContext context;
  std::string provider;
};

AskResult cmd_ask(const PipelineConfig& cfg, const AskOptions& options);
nlohmann::json provenance_json(const AskResult& result);

struct EvalOptions {
  std::filesystem::path answers;
  std::filesystem::path human_scores;  // optional
};

CommandSummary cmd_eval(const PipelineConfig& cfg, const EvalOptions& options);

}  // namespace courseqa::pipeline
