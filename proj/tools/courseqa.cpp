// courseqa: forum QA dataset curation, retrieval-augmented answering and
// rubric evaluation as pipeline subcommands.

#include <CLI11.hpp>

#include <iostream>

#include "courseqa/error.hpp"
#include "courseqa/pipeline.hpp"
#include "json.hpp"

namespace {

using courseqa::pipeline::PipelineConfig;
using courseqa::pipeline::ProviderSettings;
using nlohmann::json;

void add_provider_options(CLI::App& app, const std::string& prefix, ProviderSettings& p) {
  app.add_option("--" + prefix + "-base-url", p.base_url, "OpenAI-compatible base URL (empty: offline stub)");
  app.add_option("--" + prefix + "-model", p.model, "Model name sent to the provider");
  app.add_option("--" + prefix + "-api-key-env", p.api_key_env, "Environment variable holding the bearer token");
  app.add_option("--" + prefix + "-timeout-ms", p.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);
  app.add_option("--" + prefix + "-max-attempts", p.max_attempts, "Attempts per request")->check(CLI::PositiveNumber);
  app.add_option("--" + prefix + "-max-in-flight", p.max_in_flight, "Concurrent requests")->check(CLI::PositiveNumber);
  app.add_option("--" + prefix + "-send-top-k", p.send_top_k, "Forward top_k as a body extension field");
}

void print_summary(const std::string& command, const courseqa::pipeline::CommandSummary& summary) {
  json written = json::array();
  for (const auto& p : summary.written) written.push_back(p.string());
  std::cout << json{{"command", command}, {"written", written}, {"warnings", summary.warnings}, {"details", summary.details}}
                   .dump(2)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"courseqa: course forum QA pipeline"};
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags override it");
  app.require_subcommand(1);

  PipelineConfig cfg;
  std::string forum_export, documents_dir, index_dir, output_dir;
  app.add_option("--forum-export", forum_export, "Forum export (JSON lines)");
  app.add_option("--documents-dir", documents_dir, "Directory of course documents (.md/.txt)");
  app.add_option("--index-dir", index_dir, "Directory for the persisted retrieval index");
  app.add_option("--output-dir", output_dir, "Directory for datasets and reports");
  app.add_flag("--offline", cfg.offline, "Use stub providers only");
  app.add_option("--seed", cfg.seed, "Run seed recorded in every artifact");

  app.add_option("--max-chars", cfg.chunker.max_chars, "Chunk length cap")->check(CLI::PositiveNumber);
  app.add_option("--overlap-chars", cfg.chunker.overlap_chars, "Overlap carried into the next chunk");
  app.add_option("--dense-k", cfg.dense_k, "Dense results in the hybrid union")->check(CLI::PositiveNumber);
  app.add_option("--bm25-k", cfg.bm25_k, "BM25 results in the hybrid union")->check(CLI::PositiveNumber);
  app.add_option("--bm25-k1", cfg.bm25.k1, "BM25 k1");
  app.add_option("--bm25-b", cfg.bm25.b, "BM25 b");
  app.add_option("--dedup-threshold", cfg.dedup_threshold, "Cosine distance at which clustering stops");
  app.add_option("--stub-embedding-dim", cfg.stub_embedding_dim, "Buckets of the offline embedder")->check(CLI::PositiveNumber);

  add_provider_options(app, "chat", cfg.chat);
  add_provider_options(app, "embed", cfg.embeddings);
  add_provider_options(app, "judge", cfg.judge);

  app.add_option("--max-length", cfg.generation.max_length, "Context length in tokens");
  app.add_option("--max-new-tokens", cfg.generation.max_new_tokens, "Completion budget in tokens");
  app.add_option("--top-p", cfg.generation.top_p, "Nucleus sampling mass");
  app.add_option("--top-k", cfg.generation.top_k, "Top-k sampling cutoff");
  app.add_option("--temperature", cfg.generation.temperature, "Sampling temperature");

  auto* ingest = app.add_subcommand("ingest", "Extract QA pairs and corpus statistics from the forum export");
  auto* dedup = app.add_subcommand("dedup", "Cluster near-duplicate questions and keep one per cluster");
  auto* prefs = app.add_subcommand("prefs", "Export DPO preference pairs and the SFT dataset");
  auto* index = app.add_subcommand("index", "Chunk course documents and build BM25 + dense indices");

  auto* ask = app.add_subcommand("ask", "Answer one query with retrieval-augmented generation");
  courseqa::pipeline::AskOptions ask_options;
  bool no_bos = false, not_anonymized = false, dump_prompt = false;
  ask->add_option("--subject", ask_options.subject, "Query subject")->required();
  ask->add_option("--body", ask_options.body, "Query body")->required();
  ask->add_flag("--no-rag", ask_options.no_rag, "Skip retrieval; no snippet block");
  ask->add_flag("--no-bos", no_bos, "Omit the leading <s>");
  ask->add_flag("--dump-prompt", dump_prompt, "Print the rendered prompt");
  ask->add_flag("--not-anonymized", not_anonymized, "Mark the query as containing identifiable data");

  auto* eval = app.add_subcommand("eval", "Judge answers and report rubric scores, correlations and confusion matrices");
  courseqa::pipeline::EvalOptions eval_options;
  std::string answers, human_scores;
  eval->add_option("--answers", answers, "Answers (JSON lines: question_id, model_id, answer)")->required();
  eval->add_option("--human-scores", human_scores, "Human rubric CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  cfg.forum_export = forum_export;
  cfg.documents_dir = documents_dir;
  cfg.index_dir = index_dir;
  cfg.output_dir = output_dir;

  try {
    if (ingest->parsed()) {
      print_summary("ingest", courseqa::pipeline::cmd_ingest(cfg));
    } else if (dedup->parsed()) {
      print_summary("dedup", courseqa::pipeline::cmd_dedup(cfg));
    } else if (prefs->parsed()) {
      print_summary("prefs", courseqa::pipeline::cmd_prefs(cfg));
    } else if (index->parsed()) {
      print_summary("index", courseqa::pipeline::cmd_index(cfg));
    } else if (ask->parsed()) {
      ask_options.emit_bos = !no_bos;
      ask_options.anonymized = !not_anonymized;
      const auto result = courseqa::pipeline::cmd_ask(cfg, ask_options);
      if (dump_prompt) std::cout << "=== prompt ===\n" << result.prompt << "\n=== answer ===\n";
      std::cout << result.answer << "\n=== provenance ===\n"
                << courseqa::pipeline::provenance_json(result).dump(2) << "\n";
    } else if (eval->parsed()) {
      eval_options.answers = answers;
      eval_options.human_scores = human_scores;
      print_summary("eval", courseqa::pipeline::cmd_eval(cfg, eval_options));
    }
  } catch (const courseqa::Error& e) {
    std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
