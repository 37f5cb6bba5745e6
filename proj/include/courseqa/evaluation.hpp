#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "courseqa/embedding.hpp"
#include "courseqa/generation.hpp"
#include "courseqa/prompt.hpp"
#include "json.hpp"

namespace courseqa::evaluation {

// Rubric levels are 0, 0.5 and 1.
bool is_rubric_level(double value);

struct RubricScore {
  double usefulness = 0.0;
  double accuracy = 0.0;

  double average() const { return (usefulness + accuracy) / 2.0; }
  double get(prompt::Metric metric) const {
    return metric == prompt::Metric::usefulness ? usefulness : accuracy;
  }
  void validate() const;
};

struct EvalRecord {
  std::string question_id;
  std::string model_id;
  std::string answer;
  std::optional<RubricScore> human;
  std::optional<RubricScore> llm;
  std::optional<double> bertscore_f1;
};

// First integer after the metric name (case-insensitive), or a bare leading
// integer. Only 0, 1 and 2 are accepted; anything else throws with the raw
// response attached.
int parse_llm_score(std::string_view response, std::string_view metric_name);

// raw / 2
double normalize_score(int raw);

struct MetricSummary {
  double mean = 0.0;
  double stdev = 0.0;  // sample (n - 1); 0 when n == 1
  std::size_t n = 0;
  bool single_sample = false;
};

// Mean and sample stdev of a non-empty sample.
MetricSummary summarize(std::span<const double> values);

struct ModelSummary {
  std::string model_id;
  std::size_t records = 0;
  std::optional<MetricSummary> human_usefulness, human_accuracy, human_average;
  std::optional<MetricSummary> llm_usefulness, llm_accuracy, llm_average;
  std::optional<MetricSummary> bertscore_f1;
};

// One row per model_id, ascending.
std::vector<ModelSummary> aggregate(const std::vector<EvalRecord>& records);

// All three throw courseqa::Error("undefined correlation") for mismatched or
// short inputs and constant sequences.
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);
// Tau-b with tie corrections, O(n log n).
double kendall_tau(std::span<const double> xs, std::span<const double> ys);

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct CorrelationReport {
  std::string name;
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  double kendall_tau = 0.0;
  std::size_t n = 0;
};

CorrelationReport correlate(std::string name, std::span<const double> xs, std::span<const double> ys);

inline constexpr std::array<double, 3> kLevels{0.0, 0.5, 1.0};

// Rows: human level, columns: LLM level; cells are fractions of the sample.
struct ConfusionMatrix3 {
  std::array<std::array<double, 3>, 3> cells{};
  std::size_t n = 0;

  double total() const;
  double diagonal() const;
};

// Over records carrying both human and LLM scores; throws if there are none.
ConfusionMatrix3 confusion_matrix(const std::vector<EvalRecord>& records, prompt::Metric metric);

// Greedy max-cosine matching: precision averages over candidate tokens,
// recall over reference tokens, F1 is their harmonic mean (0 when P + R = 0).
double bertscore_f1(const std::vector<EmbeddingVector>& candidate, const std::vector<EmbeddingVector>& reference);

// Lowercased whitespace tokens, each embedded on its own.
double bertscore_f1_text(generation::EmbeddingProvider& provider, std::string_view candidate,
                         std::string_view reference);

// CSV with header question_id,model_id,usefulness,accuracy.
std::map<std::pair<std::string, std::string>, RubricScore> read_human_scores_csv(const std::filesystem::path& path);

struct EvalReport {
  std::vector<ModelSummary> models;
  std::vector<CorrelationReport> correlations;
  std::vector<std::pair<std::string, std::string>> skipped_correlations;  // name, reason
  std::map<std::string, ConfusionMatrix3> confusion;  // keyed by metric name
};

// Human-vs-LLM correlations per metric plus each evaluator against BERTScore.
EvalReport build_report(const std::vector<EvalRecord>& records);

nlohmann::json to_json(const EvalReport& report);
std::string render_table(const EvalReport& report);

// Structural check of a report produced by to_json(); returns problems found.
std::vector<std::string> validate_report_json(const nlohmann::json& report);

}  // namespace courseqa::evaluation
