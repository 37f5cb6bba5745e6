#include "courseqa/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "courseqa/error.hpp"
#include "courseqa/kernels.hpp"
#include "courseqa/text.hpp"

namespace courseqa::evaluation {

using nlohmann::json;

bool is_rubric_level(double value) { return value == 0.0 || value == 0.5 || value == 1.0; }

void RubricScore::validate() const {
  if (!is_rubric_level(usefulness) || !is_rubric_level(accuracy)) {
    throw Error("rubric scores must be 0, 0.5 or 1", "invalid_score");
  }
}

// ---------------------------------------------------------------------------
// Judge output

int parse_llm_score(std::string_view response, std::string_view metric_name) {
  auto fail = [&]() -> int {
    throw Error("no parseable score in judge response: \"" + std::string(response) + "\"", "unparseable_score");
  };
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  };
  auto digit_at = [&](std::size_t pos) -> int {
    if (pos >= response.size() || !std::isdigit(static_cast<unsigned char>(response[pos]))) return -1;
    std::size_t end = pos;
    while (end < response.size() && std::isdigit(static_cast<unsigned char>(response[end]))) ++end;
    if (end - pos != 1) return -1;
    const int value = response[pos] - '0';
    return value <= 2 ? value : -1;
  };

  const std::string haystack = lower(response);
  const std::string needle = lower(metric_name);
  if (!needle.empty()) {
    if (const std::size_t at = haystack.find(needle); at != std::string::npos) {
      std::size_t pos = at + needle.size();
      while (pos < response.size() && !std::isdigit(static_cast<unsigned char>(response[pos]))) ++pos;
      const int value = digit_at(pos);
      return value >= 0 ? value : fail();
    }
  }
  std::size_t pos = 0;
  while (pos < response.size() && (std::isspace(static_cast<unsigned char>(response[pos])) || response[pos] == '-')) ++pos;
  const int value = digit_at(pos);
  return value >= 0 ? value : fail();
}

double normalize_score(int raw) {
  if (raw < 0 || raw > 2) throw Error("raw score " + std::to_string(raw) + " outside 0-2", "invalid_score");
  return static_cast<double>(raw) / 2.0;
}

// ---------------------------------------------------------------------------
// Aggregation

MetricSummary summarize(std::span<const double> values) {
  if (values.empty()) throw Error("cannot summarize an empty sample", "empty_input");
  MetricSummary s;
  s.n = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n == 1) {
    s.single_sample = true;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

namespace {

std::optional<MetricSummary> maybe_summary(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  return summarize(values);
}

}  // namespace

std::vector<ModelSummary> aggregate(const std::vector<EvalRecord>& records) {
  struct Columns {
    std::size_t records = 0;
    std::vector<double> hu, ha, hv, lu, la, lv, bs;
  };
  std::map<std::string, Columns> by_model;
  for (const auto& r : records) {
    Columns& c = by_model[r.model_id];
    ++c.records;
    if (r.human) {
      c.hu.push_back(r.human->usefulness);
      c.ha.push_back(r.human->accuracy);
      c.hv.push_back(r.human->average());
    }
    if (r.llm) {
      c.lu.push_back(r.llm->usefulness);
      c.la.push_back(r.llm->accuracy);
      c.lv.push_back(r.llm->average());
    }
    if (r.bertscore_f1) c.bs.push_back(*r.bertscore_f1);
  }
  std::vector<ModelSummary> rows;
  for (const auto& [model, c] : by_model) {
    ModelSummary row;
    row.model_id = model;
    row.records = c.records;
    row.human_usefulness = maybe_summary(c.hu);
    row.human_accuracy = maybe_summary(c.ha);
    row.human_average = maybe_summary(c.hv);
    row.llm_usefulness = maybe_summary(c.lu);
    row.llm_accuracy = maybe_summary(c.la);
    row.llm_average = maybe_summary(c.lv);
    row.bertscore_f1 = maybe_summary(c.bs);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Correlation

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("undefined correlation: sequences differ in length", "undefined_correlation");
  if (xs.size() < 2) throw Error("undefined correlation: fewer than two samples", "undefined_correlation");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw Error("undefined correlation: non-finite value", "undefined_correlation");
    }
  }
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw Error("undefined correlation: constant sequence", "undefined_correlation");
}

std::int64_t tied_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Counts inversions in v[lo, hi) while merge-sorting it.
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // positions i+1 .. j share their mean
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return xs[a] != xs[b] ? xs[a] < xs[b] : ys[a] < ys[b];
  });

  std::int64_t x_ties = 0, joint_ties = 0;
  std::int64_t x_run = 1, joint_run = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    const bool same_x = k < n && xs[order[k]] == xs[order[k - 1]];
    const bool same_xy = same_x && ys[order[k]] == ys[order[k - 1]];
    if (same_x) {
      ++x_run;
    } else {
      x_ties += tied_pairs(x_run);
      x_run = 1;
    }
    if (same_xy) {
      ++joint_run;
    } else {
      joint_ties += tied_pairs(joint_run);
      joint_run = 1;
    }
  }

  std::vector<double> y_sorted(n);
  for (std::size_t k = 0; k < n; ++k) y_sorted[k] = ys[order[k]];
  std::vector<double> buffer(n);
  const std::int64_t discordant = count_inversions(y_sorted, buffer, 0, n);

  std::int64_t y_ties = 0, y_run = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    if (k < n && y_sorted[k] == y_sorted[k - 1]) {
      ++y_run;
    } else {
      y_ties += tied_pairs(y_run);
      y_run = 1;
    }
  }

  const std::int64_t total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t numerator = total - x_ties - y_ties + joint_ties - 2 * discordant;
  const double denominator =
      std::sqrt(static_cast<double>(total - x_ties) * static_cast<double>(total - y_ties));
  return std::clamp(static_cast<double>(numerator) / denominator, -1.0, 1.0);
}

CorrelationReport correlate(std::string name, std::span<const double> xs, std::span<const double> ys) {
  CorrelationReport report;
  report.name = std::move(name);
  report.pearson_r = pearson(xs, ys);
  report.spearman_rho = spearman(xs, ys);
  report.kendall_tau = kendall_tau(xs, ys);
  report.n = xs.size();
  return report;
}

// ---------------------------------------------------------------------------
// Confusion matrix

double ConfusionMatrix3::total() const {
  double sum = 0.0;
  for (const auto& row : cells) {
    for (double v : row) sum += v;
  }
  return sum;
}

double ConfusionMatrix3::diagonal() const { return cells[0][0] + cells[1][1] + cells[2][2]; }

namespace {

std::size_t level_index(double value) {
  for (std::size_t i = 0; i < kLevels.size(); ++i) {
    if (value == kLevels[i]) return i;
  }
  throw Error("score " + std::to_string(value) + " is not a rubric level", "invalid_score");
}

}  // namespace

ConfusionMatrix3 confusion_matrix(const std::vector<EvalRecord>& records, prompt::Metric metric) {
  std::array<std::array<std::size_t, 3>, 3> counts{};
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.human || !r.llm) continue;
    ++counts[level_index(r.human->get(metric))][level_index(r.llm->get(metric))];
    ++n;
  }
  if (n == 0) throw Error("no records carry both human and LLM scores", "empty_input");
  ConfusionMatrix3 m;
  m.n = n;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) m.cells[i][j] = static_cast<double>(counts[i][j]) / static_cast<double>(n);
  }
  return m;
}

// ---------------------------------------------------------------------------
// BERTScore

double bertscore_f1(const std::vector<EmbeddingVector>& candidate, const std::vector<EmbeddingVector>& reference) {
  if (candidate.empty() || reference.empty()) throw Error("BERTScore needs non-empty token lists", "invalid_argument");
  const std::size_t dim = candidate.front().dim();
  for (const auto* list : {&candidate, &reference}) {
    for (const auto& v : *list) {
      if (v.dim() != dim) throw Error("BERTScore token vectors differ in dimension", "dim_mismatch");
    }
  }
  // sim[i][j] between candidate i and reference j
  std::vector<double> sim(candidate.size() * reference.size());
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      sim[i * reference.size() + j] = candidate[i] == reference[j] ? 1.0 : cosine_similarity(candidate[i], reference[j]);
    }
  }
  double precision = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < reference.size(); ++j) best = std::max(best, sim[i * reference.size() + j]);
    precision += best;
  }
  precision /= static_cast<double>(candidate.size());
  double recall = 0.0;
  for (std::size_t j = 0; j < reference.size(); ++j) {
    double best = -1.0;
    for (std::size_t i = 0; i < candidate.size(); ++i) best = std::max(best, sim[i * reference.size() + j]);
    recall += best;
  }
  recall /= static_cast<double>(reference.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double bertscore_f1_text(generation::EmbeddingProvider& provider, std::string_view candidate,
                         std::string_view reference) {
  const auto cand_tokens = text::whitespace_tokens(candidate);
  const auto ref_tokens = text::whitespace_tokens(reference);
  if (cand_tokens.empty() || ref_tokens.empty()) return 0.0;
  // Embed each distinct token once.
  std::vector<std::string> unique;
  std::map<std::string, std::size_t> slot;
  for (const auto* list : {&cand_tokens, &ref_tokens}) {
    for (const auto& t : *list) {
      if (slot.emplace(t, unique.size()).second) unique.push_back(t);
    }
  }
  const auto vectors = generation::embed_texts(provider, unique);
  std::vector<EmbeddingVector> cand, ref;
  for (const auto& t : cand_tokens) cand.push_back(vectors[slot.at(t)]);
  for (const auto& t : ref_tokens) ref.push_back(vectors[slot.at(t)]);
  return bertscore_f1(cand, ref);
}

// ---------------------------------------------------------------------------
// Human scores CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(text::trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(text::trim(field));
  return fields;
}

double parse_level(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size() || field.empty() || !is_rubric_level(value)) {
    throw Error("human score '" + field + "' at line " + std::to_string(line) + " is not 0, 0.5 or 1", "invalid_score");
  }
  return value;
}

}  // namespace

std::map<std::pair<std::string, std::string>, RubricScore> read_human_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'", "io");
  std::string line;
  std::size_t line_number = 0;
  std::map<std::string, std::size_t> column;
  std::map<std::pair<std::string, std::string>, RubricScore> scores;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (column.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) column[fields[i]] = i;
      for (const char* required : {"question_id", "model_id", "usefulness", "accuracy"}) {
        if (!column.contains(required)) throw Error(std::string("human scores CSV lacks column '") + required + "'", "schema");
      }
      continue;
    }
    auto get = [&](const char* name) -> const std::string& {
      const std::size_t i = column.at(name);
      if (i >= fields.size()) throw Error("short row at line " + std::to_string(line_number), "schema");
      return fields[i];
    };
    RubricScore score{parse_level(get("usefulness"), line_number), parse_level(get("accuracy"), line_number)};
    if (!scores.emplace(std::make_pair(get("question_id"), get("model_id")), score).second) {
      throw Error("duplicate human score at line " + std::to_string(line_number), "schema");
    }
  }
  if (column.empty()) throw Error("human scores CSV is empty", "schema");
  return scores;
}

// ---------------------------------------------------------------------------
// Report

EvalReport build_report(const std::vector<EvalRecord>& records) {
  EvalReport report;
  report.models = aggregate(records);

  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::vector<Series> series{{"human_vs_llm_usefulness", {}, {}},
                             {"human_vs_llm_accuracy", {}, {}},
                             {"human_vs_llm_average", {}, {}},
                             {"human_average_vs_bertscore", {}, {}},
                             {"llm_average_vs_bertscore", {}, {}}};
  for (const auto& r : records) {
    if (r.human && r.llm) {
      series[0].xs.push_back(r.human->usefulness);
      series[0].ys.push_back(r.llm->usefulness);
      series[1].xs.push_back(r.human->accuracy);
      series[1].ys.push_back(r.llm->accuracy);
      series[2].xs.push_back(r.human->average());
      series[2].ys.push_back(r.llm->average());
    }
    if (r.human && r.bertscore_f1) {
      series[3].xs.push_back(r.human->average());
      series[3].ys.push_back(*r.bertscore_f1);
    }
    if (r.llm && r.bertscore_f1) {
      series[4].xs.push_back(r.llm->average());
      series[4].ys.push_back(*r.bertscore_f1);
    }
  }
  for (const auto& s : series) {
    try {
      report.correlations.push_back(correlate(s.name, s.xs, s.ys));
    } catch (const Error& e) {
      report.skipped_correlations.emplace_back(s.name, e.what());
    }
  }
  for (auto metric : {prompt::Metric::usefulness, prompt::Metric::accuracy}) {
    try {
      report.confusion.emplace(std::string(prompt::metric_name(metric)), confusion_matrix(records, metric));
    } catch (const Error&) {
      // no dual-scored records
    }
  }
  return report;
}

namespace {

json summary_json(const std::optional<MetricSummary>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"stdev", s->stdev}, {"n", s->n}, {"single_sample", s->single_sample}};
}

std::string cell(const std::optional<MetricSummary>& s) {
  if (!s) return "-";
  return fmt::format("{:.2f} ± {:.2f}{}", s->mean, s->stdev, s->single_sample ? "*" : "");
}

}  // namespace

json to_json(const EvalReport& report) {
  json models = json::array();
  for (const auto& m : report.models) {
    models.push_back({{"model_id", m.model_id},
                      {"records", m.records},
                      {"human",
                       {{"usefulness", summary_json(m.human_usefulness)},
                        {"accuracy", summary_json(m.human_accuracy)},
                        {"average", summary_json(m.human_average)}}},
                      {"llm",
                       {{"usefulness", summary_json(m.llm_usefulness)},
                        {"accuracy", summary_json(m.llm_accuracy)},
                        {"average", summary_json(m.llm_average)}}},
                      {"bertscore_f1", summary_json(m.bertscore_f1)}});
  }
  json correlations = json::array();
  for (const auto& c : report.correlations) {
    correlations.push_back({{"name", c.name},
                            {"pearson_r", c.pearson_r},
                            {"spearman_rho", c.spearman_rho},
                            {"kendall_tau", c.kendall_tau},
                            {"n", c.n},
                            {"note", "pearson over ordinal 3-level scores treated as interval"}});
  }
  json skipped = json::array();
  for (const auto& [name, reason] : report.skipped_correlations) skipped.push_back({{"name", name}, {"reason", reason}});
  json confusion = json::object();
  for (const auto& [metric, m] : report.confusion) {
    json rows = json::array();
    for (const auto& row : m.cells) rows.push_back(row);
    confusion[metric] = {{"levels", kLevels}, {"rows", "human"}, {"cols", "llm"}, {"n", m.n}, {"matrix", rows}};
  }
  return {{"models", models},
          {"correlations", correlations},
          {"skipped_correlations", skipped},
          {"confusion_matrices", confusion}};
}

std::string render_table(const EvalReport& report) {
  std::size_t width = 5;
  for (const auto& m : report.models) width = std::max(width, m.model_id.size());
  std::string out;
  out += fmt::format("{:<{}} | {:^38} | {:^38} | {:^12}\n", "", width, "Evaluation by Humans", "Evaluation using LLM judge",
                     "");
  out += fmt::format("{:<{}} | {:^12} {:^12} {:^12} | {:^12} {:^12} {:^12} | {:^12}\n", "Model", width, "Usefulness",
                     "Accuracy", "Avg", "Usefulness", "Accuracy", "Avg", "BertScore F1");
  out += std::string(width + 97, '-') + "\n";
  for (const auto& m : report.models) {
    out += fmt::format("{:<{}} | {:^12} {:^12} {:^12} | {:^12} {:^12} {:^12} | {:^12}\n", m.model_id, width,
                       cell(m.human_usefulness), cell(m.human_accuracy), cell(m.human_average),
                       cell(m.llm_usefulness), cell(m.llm_accuracy), cell(m.llm_average), cell(m.bertscore_f1));
  }
  out += "(mean ± sample stdev; * = single record)\n";
  if (!report.correlations.empty()) {
    out += "\nCorrelations\n";
    out += fmt::format("{:<28} {:>10} {:>10} {:>10} {:>5}\n", "pair", "pearson", "spearman", "kendall", "n");
    for (const auto& c : report.correlations) {
      out += fmt::format("{:<28} {:>10.3f} {:>10.3f} {:>10.3f} {:>5}\n", c.name, c.pearson_r, c.spearman_rho,
                         c.kendall_tau, c.n);
    }
  }
  for (const auto& [name, reason] : report.skipped_correlations) {
    out += fmt::format("{:<28} skipped: {}\n", name, reason);
  }
  for (const auto& [metric, m] : report.confusion) {
    out += fmt::format("\nConfusion matrix: {} (rows human, cols LLM; n = {})\n", metric, m.n);
    out += fmt::format("{:>8} {:>8} {:>8} {:>8}\n", "", "0", "0.5", "1");
    for (std::size_t i = 0; i < 3; ++i) {
      out += fmt::format("{:>8} {:>8.3f} {:>8.3f} {:>8.3f}\n", i == 0 ? "0" : i == 1 ? "0.5" : "1", m.cells[i][0],
                         m.cells[i][1], m.cells[i][2]);
    }
  }
  return out;
}

std::vector<std::string> validate_report_json(const json& report) {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  auto check_summary = [&](const json& s, const std::string& where) {
    if (s.is_null()) return;
    need(s.is_object() && s.contains("mean") && s["mean"].is_number() && s.contains("stdev") &&
             s["stdev"].is_number() && s.contains("n") && s["n"].is_number_unsigned() && s.contains("single_sample") &&
             s["single_sample"].is_boolean(),
         where + " must be a {mean, stdev, n, single_sample} object or null");
    if (s.is_object() && s.contains("stdev") && s["stdev"].is_number()) need(s["stdev"].get<double>() >= 0.0, where + ".stdev < 0");
  };

  need(report.is_object(), "report must be an object");
  if (!report.is_object()) return problems;
  need(report.contains("models") && report["models"].is_array(), "models must be an array");
  if (report.contains("models") && report["models"].is_array()) {
    for (const auto& m : report["models"]) {
      need(m.contains("model_id") && m["model_id"].is_string(), "model_id must be a string");
      for (const char* who : {"human", "llm"}) {
        need(m.contains(who) && m[who].is_object(), std::string(who) + " must be an object");
        if (!m.contains(who) || !m[who].is_object()) continue;
        for (const char* metric : {"usefulness", "accuracy", "average"}) {
          need(m[who].contains(metric), std::string(who) + "." + metric + " missing");
          if (m[who].contains(metric)) check_summary(m[who][metric], std::string(who) + "." + metric);
        }
      }
      need(m.contains("bertscore_f1"), "bertscore_f1 missing");
      if (m.contains("bertscore_f1")) check_summary(m["bertscore_f1"], "bertscore_f1");
    }
  }
  need(report.contains("correlations") && report["correlations"].is_array(), "correlations must be an array");
  if (report.contains("correlations") && report["correlations"].is_array()) {
    for (const auto& c : report["correlations"]) {
      for (const char* key : {"pearson_r", "spearman_rho", "kendall_tau"}) {
        const bool ok = c.contains(key) && c[key].is_number() && c[key].get<double>() >= -1.0 && c[key].get<double>() <= 1.0;
        need(ok, std::string("correlation ") + key + " must be a number in [-1, 1]");
      }
      need(c.contains("n") && c["n"].is_number_unsigned() && c["n"].get<std::size_t>() >= 2, "correlation n must be >= 2");
    }
  }
  need(report.contains("confusion_matrices") && report["confusion_matrices"].is_object(),
       "confusion_matrices must be an object");
  if (report.contains("confusion_matrices") && report["confusion_matrices"].is_object()) {
    for (const auto& [metric, m] : report["confusion_matrices"].items()) {
      const bool shaped = m.contains("matrix") && m["matrix"].is_array() && m["matrix"].size() == 3;
      need(shaped, "confusion matrix " + metric + " must be 3x3");
      if (!shaped) continue;
      double total = 0.0;
      for (const auto& row : m["matrix"]) {
        need(row.is_array() && row.size() == 3, "confusion matrix " + metric + " must be 3x3");
        if (!row.is_array()) continue;
        for (const auto& v : row) {
          need(v.is_number() && v.get<double>() >= 0.0, "confusion matrix " + metric + " has a negative cell");
          if (v.is_number()) total += v.get<double>();
        }
      }
      need(std::abs(total - 1.0) <= 1e-9, "confusion matrix " + metric + " does not sum to 1");
    }
  }
  return problems;
}

}  // namespace courseqa::evaluation
