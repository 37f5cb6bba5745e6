#include "courseqa/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <map>
#include <set>

#include "courseqa/error.hpp"
#include "courseqa/evaluation.hpp"
#include "courseqa/ingest.hpp"
#include "courseqa/preference.hpp"
#include "courseqa/prompt.hpp"
#include "courseqa/text.hpp"

namespace courseqa::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

generation::ProviderConfig ProviderSettings::to_provider_config() const {
  generation::ProviderConfig pc;
  pc.base_url = base_url;
  pc.model = model;
  pc.api_key_env = api_key_env;
  pc.timeout = std::chrono::milliseconds(timeout_ms);
  pc.retry.max_attempts = max_attempts;
  pc.max_in_flight = max_in_flight;
  pc.send_top_k = send_top_k;
  return pc;
}

void PipelineConfig::validate() const {
  chunker.validate();
  generation.validate();
  if (dense_k < 1 || bm25_k < 1) throw Error("dense_k and bm25_k must be at least 1", "invalid_config");
  if (!(dedup_threshold > 0.0)) throw Error("dedup threshold must be positive", "invalid_config");
  if (stub_embedding_dim == 0) throw Error("stub embedding dimension must be positive", "invalid_config");
  if (output_dir.empty()) throw Error("output_dir is not configured", "invalid_config");
  for (const auto* p : {&chat, &embeddings, &judge}) p->to_provider_config().validate();
}

namespace {

json provider_json(const ProviderSettings& p) {
  return {{"base_url", p.base_url},         {"model", p.model},
          {"api_key_env", p.api_key_env},   {"timeout_ms", p.timeout_ms},
          {"max_attempts", p.max_attempts}, {"max_in_flight", p.max_in_flight},
          {"send_top_k", p.send_top_k}};
}

}  // namespace

json PipelineConfig::to_json() const {
  return {{"paths",
           {{"forum_export", forum_export.generic_string()},
            {"documents_dir", documents_dir.generic_string()},
            {"index_dir", index_dir.generic_string()},
            {"output_dir", output_dir.generic_string()}}},
          {"chunker",
           {{"max_chars", chunker.max_chars}, {"overlap_chars", chunker.overlap_chars}, {"separators", chunker.separators}}},
          {"bm25", {{"k1", bm25.k1}, {"b", bm25.b}}},
          {"retrieval", {{"dense_k", dense_k}, {"bm25_k", bm25_k}}},
          {"dedup_threshold", dedup_threshold},
          {"providers", {{"chat", provider_json(chat)}, {"embeddings", provider_json(embeddings)}, {"judge", provider_json(judge)}}},
          {"stub_embedding_dim", stub_embedding_dim},
          {"generation",
           {{"max_length", generation.max_length},
            {"max_new_tokens", generation.max_new_tokens},
            {"top_p", generation.top_p},
            {"top_k", generation.top_k},
            {"temperature", generation.temperature}}},
          {"seed", seed},
          {"offline", offline}};
}

std::string PipelineConfig::hash() const { return text::sha256_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Locking and artifacts

DirectoryLock::DirectoryLock(const fs::path& dir) {
  fs::create_directories(dir);
  const auto path = dir / ".courseqa.lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lock file '" + path.string() + "'", "io");
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("another courseqa command holds '" + path.string() + "'", "locked");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

namespace {

fs::path require_artifact(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw Error("missing artifact '" + path.string() + "'; run `courseqa " + std::string(producer) + "` first",
                "missing_artifact");
  }
  return path;
}

fs::path require_input(const fs::path& path, std::string_view what) {
  if (path.empty() || !fs::exists(path)) {
    throw Error(std::string(what) + " '" + path.string() + "' does not exist", "missing_input");
  }
  return path;
}

void write_manifest(const fs::path& artifact, const PipelineConfig& cfg, std::size_t records) {
  json manifest{{"artifact", artifact.filename().string()},
                {"sha256", text::sha256_file_hex(artifact)},
                {"records", records},
                {"config_hash", cfg.hash()},
                {"seed", cfg.seed}};
  auto path = artifact;
  path += ".manifest.json";
  io::write_file(path, manifest.dump(2) + "\n");
}

void write_json(const fs::path& path, json body, const PipelineConfig& cfg) {
  body["config_hash"] = cfg.hash();
  body["seed"] = cfg.seed;
  io::write_file(path, body.dump(2) + "\n");
}

bool use_stub(const PipelineConfig& cfg, const ProviderSettings& p) { return cfg.offline || p.base_url.empty(); }

void log_call(const PipelineConfig& cfg, const generation::ChatProvider& provider, const std::string& prompt,
              const std::string& response) {
  // Live calls are not reproducible; keep them verbatim for audit.
  if (provider.describe().rfind("stub-", 0) == 0) return;
  const auto path = cfg.output_dir / artifacts::kCallLog;
  std::string existing = fs::exists(path) ? io::read_file(path) : std::string();
  existing += json{{"provider", provider.describe()}, {"config_hash", cfg.hash()}, {"prompt", prompt}, {"response", response}}
                  .dump(-1, ' ', false, json::error_handler_t::replace);
  existing += "\n";
  io::write_file(path, existing);
}

}  // namespace

std::unique_ptr<generation::ChatProvider> make_chat_provider(const PipelineConfig& cfg) {
  if (use_stub(cfg, cfg.chat)) return std::make_unique<generation::StubChatProvider>(generation::StubChatProvider::Mode::echo);
  return std::make_unique<generation::HttpChatProvider>(cfg.chat.to_provider_config());
}

std::unique_ptr<generation::ChatProvider> make_judge_provider(const PipelineConfig& cfg) {
  if (use_stub(cfg, cfg.judge)) return std::make_unique<generation::StubChatProvider>(generation::StubChatProvider::Mode::judge);
  return std::make_unique<generation::HttpChatProvider>(cfg.judge.to_provider_config());
}

std::unique_ptr<generation::EmbeddingProvider> make_embedding_provider(const PipelineConfig& cfg) {
  if (use_stub(cfg, cfg.embeddings)) return std::make_unique<generation::StubEmbeddingProvider>(cfg.stub_embedding_dim);
  return std::make_unique<generation::HttpEmbeddingProvider>(cfg.embeddings.to_provider_config());
}

// ---------------------------------------------------------------------------
// Commands

CommandSummary cmd_ingest(const PipelineConfig& cfg) {
  cfg.validate();
  require_input(cfg.forum_export, "forum export");
  DirectoryLock lock(cfg.output_dir);
  CommandSummary summary;
  const auto posts = ingest::parse_forum_export(cfg.forum_export);
  const auto pairs = ingest::extract_qa_pairs(posts, &summary.warnings);

  const auto pairs_path = cfg.output_dir / artifacts::kQaPairs;
  ingest::write_qa_pairs(pairs_path, pairs);
  write_manifest(pairs_path, cfg, pairs.size());

  json stats = ingest::to_json(ingest::corpus_stats(posts));
  stats["qa_pairs"] = pairs.size();
  stats["warnings"] = summary.warnings;
  const auto stats_path = cfg.output_dir / artifacts::kCorpusStats;
  write_json(stats_path, stats, cfg);

  summary.written = {pairs_path, stats_path};
  summary.details = {{"posts", posts.size()}, {"qa_pairs", pairs.size()}};
  return summary;
}

CommandSummary cmd_dedup(const PipelineConfig& cfg) {
  cfg.validate();
  DirectoryLock lock(cfg.output_dir);
  const auto pairs = ingest::read_qa_pairs(require_artifact(cfg.output_dir / artifacts::kQaPairs, "ingest"));
  CommandSummary summary;
  std::vector<ingest::QAPair> kept;
  std::vector<dedup::ClusterAssignment> clusters;
  if (!pairs.empty()) {
    std::vector<std::string> texts;
    for (const auto& pair : pairs) texts.push_back(dedup::embedding_text(pair));
    auto embedder = make_embedding_provider(cfg);
    const auto vectors = generation::embed_texts(*embedder, texts);
    std::map<std::string, EmbeddingVector> by_id;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (!by_id.emplace(pairs[i].pair_id, vectors[i]).second) {
        throw Error("duplicate pair_id '" + pairs[i].pair_id + "' in " + artifacts::kQaPairs, "schema");
      }
    }
    clusters = dedup::agglomerative_cluster(by_id, cfg.dedup_threshold);
    dedup::choose_representatives(clusters, pairs);
    kept = dedup::deduplicate(pairs, clusters);
  }
  const auto kept_path = cfg.output_dir / artifacts::kDedupPairs;
  ingest::write_qa_pairs(kept_path, kept);
  write_manifest(kept_path, cfg, kept.size());

  json report = dedup::cluster_report(cfg.dedup_threshold, clusters);
  report["input_count"] = pairs.size();
  report["output_count"] = kept.size();
  const auto report_path = cfg.output_dir / artifacts::kClusters;
  write_json(report_path, report, cfg);

  summary.written = {kept_path, report_path};
  summary.details = {{"input", pairs.size()}, {"kept", kept.size()}, {"clusters", clusters.size()}};
  return summary;
}

CommandSummary cmd_prefs(const PipelineConfig& cfg) {
  cfg.validate();
  require_input(cfg.forum_export, "forum export");
  DirectoryLock lock(cfg.output_dir);
  const auto pairs = ingest::read_qa_pairs(require_artifact(cfg.output_dir / artifacts::kDedupPairs, "dedup"));
  CommandSummary summary;
  const auto posts = ingest::parse_forum_export(cfg.forum_export);
  const auto prefs = preference::build_preference_pairs(posts, &summary.warnings);

  const auto dpo_path = cfg.output_dir / artifacts::kDpoPairs;
  const std::size_t n_dpo = preference::export_dpo_dataset(prefs, dpo_path);
  write_manifest(dpo_path, cfg, n_dpo);
  std::vector<json> meta;
  for (const auto& p : prefs) meta.push_back(preference::dpo_metadata_record(p));
  const auto meta_path = cfg.output_dir / artifacts::kDpoMeta;
  io::write_file(meta_path, io::to_jsonl(meta));

  const auto sft_path = cfg.output_dir / artifacts::kSftPairs;
  const std::size_t n_sft = preference::export_sft_dataset(pairs, sft_path);
  write_manifest(sft_path, cfg, n_sft);

  summary.written = {dpo_path, meta_path, sft_path};
  summary.details = {{"dpo_pairs", n_dpo}, {"sft_pairs", n_sft}};
  return summary;
}

CommandSummary cmd_index(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.index_dir.empty()) throw Error("index_dir is not configured", "invalid_config");
  const auto docs = chunker::load_documents(require_input(cfg.documents_dir, "documents directory"));
  if (docs.empty()) throw Error("no .md or .txt documents under '" + cfg.documents_dir.string() + "'", "missing_input");
  DirectoryLock lock(cfg.index_dir);

  std::vector<chunker::DocumentChunk> chunks;
  for (const auto& doc : docs) {
    auto doc_chunks = chunker::split_document(doc, cfg.chunker);
    chunks.insert(chunks.end(), std::make_move_iterator(doc_chunks.begin()), std::make_move_iterator(doc_chunks.end()));
  }
  retrieval::ChunkStore store(chunks);
  const auto ordered = store.ordered();
  const auto bm25 = retrieval::Bm25Index::build(ordered, cfg.bm25);

  std::vector<std::string> texts;
  for (const auto& chunk : ordered) texts.push_back(chunk.text);
  auto embedder = make_embedding_provider(cfg);
  const auto vectors = generation::embed_texts(*embedder, texts);
  std::map<std::string, EmbeddingVector> by_key;
  for (std::size_t i = 0; i < ordered.size(); ++i) by_key.emplace(ordered[i].key(), vectors[i]);
  const auto dense = retrieval::DenseIndex::build(by_key);

  store.save(cfg.index_dir);
  bm25.save(cfg.index_dir);
  dense.save(cfg.index_dir);
  json header{{"format", "courseqa-index/1"},
              {"documents", docs.size()},
              {"chunks", ordered.size()},
              {"chunker", {{"max_chars", cfg.chunker.max_chars}, {"overlap_chars", cfg.chunker.overlap_chars}}},
              {"bm25", bm25.header()},
              {"dense", dense.header()},
              {"embedder", embedder->describe()}};
  const auto header_path = cfg.index_dir / artifacts::kIndexHeader;
  write_json(header_path, header, cfg);

  CommandSummary summary;
  summary.written = {header_path};
  summary.details = {{"documents", docs.size()}, {"chunks", ordered.size()}};
  return summary;
}

AskResult cmd_ask(const PipelineConfig& cfg, const AskOptions& options) {
  cfg.validate();
  AskResult result;
  std::optional<std::string> rag;
  if (!options.no_rag) {
    require_artifact(cfg.index_dir / artifacts::kIndexHeader, "index");
    const auto store = retrieval::ChunkStore::load(cfg.index_dir);
    const auto bm25 = retrieval::Bm25Index::load(cfg.index_dir);
    const auto dense = retrieval::DenseIndex::load(cfg.index_dir);
    auto embedder = make_embedding_provider(cfg);
    const std::string query = retrieval::query_text(options.subject, options.body);
    const auto query_vec = generation::embed_texts(*embedder, {query}).front();
    result.context = retrieval::hybrid_retrieve(dense, bm25, store, query, query_vec, cfg.dense_k, cfg.bm25_k);
    if (!result.context.empty()) rag = prompt::render_rag_block(result.context);
  }
  const auto bundle = prompt::render_chat_prompt(prompt::default_system_text(), rag, options.subject, options.body,
                                                 {.emit_bos = options.emit_bos});
  result.prompt = bundle.rendered;
  result.prompt_sha256 = text::sha256_hex(bundle.rendered);
  auto chat = make_chat_provider(cfg);
  result.provider = chat->describe();
  result.answer = generation::generate_answer(*chat, bundle, cfg.generation, options.anonymized);
  if (result.provider.rfind("stub-", 0) != 0) {
    DirectoryLock lock(cfg.output_dir);
    log_call(cfg, *chat, result.prompt, result.answer);
  }
  return result;
}

json provenance_json(const AskResult& result) {
  json chunks = json::array();
  for (const auto& item : result.context) {
    chunks.push_back({{"key", item.chunk.key()},
                      {"doc_id", item.chunk.doc_id},
                      {"source", retrieval::to_string(item.source)},
                      {"score", item.score}});
  }
  return {{"answer", result.answer}, {"provider", result.provider}, {"prompt_sha256", result.prompt_sha256}, {"chunks", chunks}};
}

CommandSummary cmd_eval(const PipelineConfig& cfg, const EvalOptions& options) {
  cfg.validate();
  DirectoryLock lock(cfg.output_dir);
  const auto pairs = ingest::read_qa_pairs(require_artifact(cfg.output_dir / artifacts::kDedupPairs, "dedup"));
  require_input(options.answers, "answers file");
  std::map<std::string, const ingest::QAPair*> truth;
  for (const auto& p : pairs) truth.emplace(p.pair_id, &p);

  CommandSummary summary;
  std::vector<evaluation::EvalRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  io::for_each_jsonl(options.answers, [&](const json& r, std::size_t line) {
    evaluation::EvalRecord record;
    try {
      record.question_id = r.at("question_id").get<std::string>();
      record.model_id = r.at("model_id").get<std::string>();
      record.answer = r.at("answer").get<std::string>();
    } catch (const json::exception& e) {
      throw Error("bad answer record at line " + std::to_string(line) + ": " + e.what(), "schema");
    }
    if (!truth.contains(record.question_id)) {
      summary.warnings.push_back("answer for unknown question '" + record.question_id + "' at line " +
                                 std::to_string(line) + " skipped");
      return;
    }
    if (!seen.emplace(record.question_id, record.model_id).second) {
      throw Error("duplicate answer for (" + record.question_id + ", " + record.model_id + ") at line " +
                      std::to_string(line), "schema");
    }
    records.push_back(std::move(record));
  });
  if (records.empty()) throw Error("no answers match known questions", "empty_input");

  // LLM judge: two prompts per record, dispatched with bounded concurrency.
  auto judge = make_judge_provider(cfg);
  std::vector<generation::ChatRequest> requests;
  for (const auto& r : records) {
    const auto* gt = truth.at(r.question_id);
    const std::string question = preference::instruction_text(gt->question_subject, gt->question_body);
    for (auto metric : {prompt::Metric::usefulness, prompt::Metric::accuracy}) {
      requests.push_back({{{"user", prompt::render_eval_prompt(metric, question, gt->answer_body, r.answer)}}, true});
    }
  }
  const auto responses = generation::complete_batch(*judge, requests, cfg.generation, cfg.judge.max_in_flight);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int u = evaluation::parse_llm_score(responses[2 * i], prompt::metric_name(prompt::Metric::usefulness));
    const int a = evaluation::parse_llm_score(responses[2 * i + 1], prompt::metric_name(prompt::Metric::accuracy));
    records[i].llm = evaluation::RubricScore{evaluation::normalize_score(u), evaluation::normalize_score(a)};
    log_call(cfg, *judge, requests[2 * i].messages.back().content, responses[2 * i]);
    log_call(cfg, *judge, requests[2 * i + 1].messages.back().content, responses[2 * i + 1]);
  }

  auto embedder = make_embedding_provider(cfg);
  for (auto& r : records) {
    r.bertscore_f1 = evaluation::bertscore_f1_text(*embedder, r.answer, truth.at(r.question_id)->answer_body);
  }

  if (!options.human_scores.empty()) {
    const auto human = evaluation::read_human_scores_csv(require_input(options.human_scores, "human scores CSV"));
    for (auto& r : records) {
      if (const auto it = human.find({r.question_id, r.model_id}); it != human.end()) r.human = it->second;
    }
  }

  const auto report = evaluation::build_report(records);
  const auto report_path = cfg.output_dir / artifacts::kEvalReport;
  json body = evaluation::to_json(report);
  body["warnings"] = summary.warnings;
  write_json(report_path, body, cfg);
  const auto table_path = cfg.output_dir / artifacts::kEvalTable;
  io::write_file(table_path, evaluation::render_table(report));

  std::vector<json> rows;
  auto score_json = [](const std::optional<evaluation::RubricScore>& s) -> json {
    if (!s) return nullptr;
    return {{"usefulness", s->usefulness}, {"accuracy", s->accuracy}, {"average", s->average()}};
  };
  for (const auto& r : records) {
    rows.push_back({{"question_id", r.question_id},
                    {"model_id", r.model_id},
                    {"human", score_json(r.human)},
                    {"llm", score_json(r.llm)},
                    {"bertscore_f1", r.bertscore_f1 ? json(*r.bertscore_f1) : json(nullptr)}});
  }
  const auto records_path = cfg.output_dir / artifacts::kEvalRecords;
  io::write_file(records_path, io::to_jsonl(rows));
  write_manifest(records_path, cfg, rows.size());

  summary.written = {report_path, table_path, records_path};
  summary.details = {{"records", records.size()}, {"models", report.models.size()}};
  return summary;
}

}  // namespace courseqa::pipeline
