#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "courseqa/error.hpp"
#include "courseqa/evaluation.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using namespace courseqa;
using namespace courseqa::evaluation;

namespace {

EvalRecord rec(const std::string& model, double hu, double ha, double lu, double la, double bert = 0.5) {
  EvalRecord r;
  r.question_id = "q";
  r.model_id = model;
  r.human = RubricScore{hu, ha};
  r.llm = RubricScore{lu, la};
  r.bertscore_f1 = bert;
  return r;
}

std::vector<std::vector<double>> rows(const std::vector<EmbeddingVector>& v) {
  std::vector<std::vector<double>> out;
  for (const auto& e : v) out.push_back(e.values);
  return out;
}

}  // namespace

TEST(Evaluation, ParseLlmScore) {
  EXPECT_EQ(parse_llm_score("- Usefulness: 2", "Usefulness"), 2);
  EXPECT_EQ(parse_llm_score("1", "Usefulness"), 1);
  EXPECT_EQ(parse_llm_score("accuracy: 0 because it is wrong", "Accuracy"), 0);
  EXPECT_EQ(parse_llm_score("- Accuracy: 1\nExplanation: 2 facts", "Accuracy"), 1);
  EXPECT_THROW(parse_llm_score("The answer is great", "Usefulness"), Error);
  EXPECT_THROW(parse_llm_score("- Usefulness: 5", "Usefulness"), Error);
  EXPECT_THROW(parse_llm_score("- Usefulness: 10", "Usefulness"), Error);
  try {
    parse_llm_score("no digits here", "Usefulness");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no digits here"), std::string::npos);
  }
}

TEST(Evaluation, NormalizeScore) {
  EXPECT_EQ(normalize_score(0), 0.0);
  EXPECT_EQ(normalize_score(1), 0.5);
  EXPECT_EQ(normalize_score(2), 1.0);
  EXPECT_THROW(normalize_score(3), Error);
  EXPECT_THROW(normalize_score(-1), Error);
  for (int raw : {0, 1, 2}) {
    EXPECT_EQ(normalize_score(parse_llm_score("- Usefulness: " + std::to_string(raw), "Usefulness")), raw / 2.0);
  }
}

TEST(Evaluation, SummarizeAndAggregate) {
  const std::vector<double> xs = {1, 0, 0.5, 0.5};
  const auto s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_NEAR(s.stdev, std::sqrt(0.5 / 3.0), 1e-15);
  const std::vector<double> same = {0.5, 0.5, 0.5};
  EXPECT_EQ(summarize(same).stdev, 0.0);
  const std::vector<double> one = {1.0};
  EXPECT_TRUE(summarize(one).single_sample);
  EXPECT_EQ(summarize(one).mean, 1.0);
  EXPECT_EQ(summarize(one).stdev, 0.0);

  const auto models = aggregate({rec("b", 1, 1, 1, 1), rec("a", 0, 1, 0, 0), rec("b", 0, 0, 0, 0)});
  ASSERT_EQ(models.size(), 2u);
  EXPECT_EQ(models[0].model_id, "a");
  EXPECT_TRUE(models[0].human_usefulness->single_sample);
  EXPECT_EQ(models[1].records, 2u);
  EXPECT_DOUBLE_EQ(models[1].human_average->mean, 0.5);
}

TEST(Evaluation, RubricValidation) {
  EXPECT_TRUE(is_rubric_level(0.5));
  EXPECT_FALSE(is_rubric_level(0.25));
  EXPECT_THROW((RubricScore{0.3, 1}.validate()), Error);
  EXPECT_DOUBLE_EQ((RubricScore{1, 0.5}.average()), 0.75);
}

TEST(Evaluation, CorrelationExamples) {
  const std::vector<double> a = {1, 2, 3, 4}, r = {4, 3, 2, 1};
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  const std::vector<double> b = {1, 3, 2, 5};
  EXPECT_NEAR(pearson(a, b), oracle::pearson(a, b), 1e-12);

  EXPECT_NEAR(spearman(a, r), -1.0, 1e-15);
  std::vector<double> ea;
  for (double x : a) ea.push_back(std::exp(x));
  EXPECT_NEAR(spearman(ea, a), 1.0, 1e-15);
  std::vector<double> lin;
  for (double x : b) lin.push_back(2 * x + 7);
  EXPECT_NEAR(spearman(lin, a), spearman(b, a), 1e-15);
  const std::vector<double> tx = {1, 2, 2, 3}, ty = {1, 3, 2, 4};
  EXPECT_NEAR(spearman(tx, ty), oracle::spearman(tx, ty), 1e-12);

  EXPECT_EQ(kendall_tau(a, a), 1.0);
  EXPECT_EQ(kendall_tau(a, r), -1.0);
  EXPECT_NEAR(kendall_tau(tx, ty), oracle::kendall_tau_b(tx, ty), 1e-12);

  const std::vector<double> flat = {2, 2, 2, 2};
  for (auto f : {pearson, spearman, kendall_tau}) {
    try {
      f(flat, a);
      FAIL();
    } catch (const Error& e) {
      EXPECT_TRUE(std::string(e.what()).starts_with("undefined correlation")) << e.what();
    }
  }
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Evaluation, AverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  const std::vector<double> v = {3, 1, 3, 3, 2};
  EXPECT_EQ(average_ranks(v), oracle::ranks(v));
}

TEST(Evaluation, RandomizedCorrelationsAgainstOracles) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + rng() % 25;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % 5) * 0.5;
      y[i] = static_cast<double>(rng() % 7) - 3.0;
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
        std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
      continue;
    }
    EXPECT_NEAR(pearson(x, y), oracle::pearson(x, y), 1e-12);
    EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
    EXPECT_NEAR(kendall_tau(x, y), oracle::kendall_tau_b(x, y), 1e-12);
  }
}

TEST(Evaluation, ConfusionMatrixFromHandTally) {
  // human -> llm: 0->0, 0->0.5, 0.5->0.5, 1->1, 1->1, 1->0.5
  const std::vector<EvalRecord> records = {rec("m", 0, 0, 0, 0),     rec("m", 0, 0, 0.5, 0),
                                           rec("m", 0.5, 0, 0.5, 0), rec("m", 1, 0, 1, 0),
                                           rec("m", 1, 0, 1, 0),     rec("m", 1, 0, 0.5, 0)};
  const auto m = confusion_matrix(records, prompt::Metric::usefulness);
  EXPECT_EQ(m.n, 6u);
  EXPECT_DOUBLE_EQ(m.cells[0][0], 1.0 / 6);
  EXPECT_DOUBLE_EQ(m.cells[0][1], 1.0 / 6);
  EXPECT_DOUBLE_EQ(m.cells[1][1], 1.0 / 6);
  EXPECT_DOUBLE_EQ(m.cells[2][2], 2.0 / 6);
  EXPECT_DOUBLE_EQ(m.cells[2][1], 1.0 / 6);
  EXPECT_EQ(m.cells[1][0], 0.0);
  EXPECT_NEAR(m.total(), 1.0, 1e-9);
  EXPECT_NEAR(m.diagonal(), 4.0 / 6, 1e-15);

  const auto acc = confusion_matrix(records, prompt::Metric::accuracy);
  EXPECT_EQ(acc.cells[0][0], 1.0);

  const auto upper = confusion_matrix({rec("m", 0, 0, 0.5, 0), rec("m", 0.5, 0, 1, 0)}, prompt::Metric::usefulness);
  EXPECT_EQ(upper.diagonal(), 0.0);
  EXPECT_EQ(upper.cells[0][1] + upper.cells[1][2], 1.0);

  EvalRecord human_only = rec("m", 0, 0, 0, 0);
  human_only.llm.reset();
  EXPECT_THROW(confusion_matrix({human_only}, prompt::Metric::usefulness), Error);
}

TEST(Evaluation, BertScoreExamples) {
  const std::vector<EmbeddingVector> x = {{{1, 2, 0}}, {{0, 1, 1}}, {{3, 0, 1}}};
  EXPECT_EQ(bertscore_f1(x, x), 1.0);
  EXPECT_EQ(bertscore_f1({{{1, 0}}}, {{{0, 1}}, {{0, 2}}}), 0.0);

  const std::vector<EmbeddingVector> cand = {{{1, 0.5}}, {{0.2, 1}}};
  const std::vector<EmbeddingVector> ref = {{{1, 0}}, {{0, 1}}, {{1, 1}}};
  EXPECT_NEAR(bertscore_f1(cand, ref), oracle::bertscore_f1(rows(cand), rows(ref)), 1e-12);
  EXPECT_THROW(bertscore_f1({{{1, 0}}}, {{{1, 0, 0}}}), Error);
  EXPECT_THROW(bertscore_f1({}, ref), Error);
}

TEST(Evaluation, BertScoreOnText) {
  generation::StubEmbeddingProvider stub;
  EXPECT_DOUBLE_EQ(bertscore_f1_text(stub, "Use a for loop", "use a FOR loop"), 1.0);
  const double partial = bertscore_f1_text(stub, "use a while loop", "use a for loop");
  EXPECT_GT(partial, 0.0);
  EXPECT_LT(partial, 1.0);
}

TEST(Evaluation, HumanScoresCsv) {
  const auto dir = fixture::scratch("eval_csv");
  const auto path = fixture::write(dir / "h.csv", "model_id,question_id,usefulness,accuracy\r\nm,q1,0.5,1\r\n\"m,2\",q2,0,0\n");
  const auto scores = read_human_scores_csv(path);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores.at({"q1", "m"}).usefulness, 0.5);
  EXPECT_TRUE(scores.contains({"q2", "m,2"}));
  EXPECT_THROW(read_human_scores_csv(fixture::write(dir / "bad.csv", "question_id,model_id,usefulness,accuracy\nq,m,0.7,1\n")),
               Error);
  EXPECT_THROW(read_human_scores_csv(fixture::write(dir / "cols.csv", "question_id,model_id,usefulness\n")), Error);
}

TEST(Evaluation, ReportJsonAndTable) {
  std::vector<EvalRecord> records = {rec("base", 0, 0.5, 0, 0.5, 0.2), rec("base", 0.5, 0, 0.5, 0.5, 0.4),
                                     rec("rag", 1, 1, 1, 0.5, 0.9),   rec("rag", 0.5, 1, 1, 1, 0.7)};
  const auto report = build_report(records);
  EXPECT_EQ(report.models.size(), 2u);
  EXPECT_EQ(report.confusion.size(), 2u);
  EXPECT_FALSE(report.correlations.empty());
  const auto j = to_json(report);
  EXPECT_TRUE(validate_report_json(j).empty());
  auto broken = j;
  broken["confusion_matrices"]["Usefulness"]["matrix"][0][0] = 5.0;
  EXPECT_FALSE(validate_report_json(broken).empty());

  const auto table = render_table(report);
  EXPECT_NE(table.find("Evaluation by Humans"), std::string::npos);
  EXPECT_NE(table.find("0.25 ± 0.35"), std::string::npos) << table;
  EXPECT_NE(table.find("BertScore F1"), std::string::npos);
  EXPECT_LT(table.find("base"), table.find("rag"));
}

TEST(Evaluation, UndefinedCorrelationsAreSkipped) {
  const auto report = build_report({rec("m", 0.5, 0.5, 1, 1, 0.1), rec("m", 0.5, 0.5, 0, 0, 0.2)});
  EXPECT_FALSE(report.skipped_correlations.empty());
  EXPECT_TRUE(validate_report_json(to_json(report)).empty());
}
