#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "courseqa/dedup.hpp"
#include "courseqa/error.hpp"
#include "courseqa/generation.hpp"
#include "support/oracles.hpp"

using namespace courseqa;
using namespace courseqa::dedup;

namespace {

EmbeddingVector v(std::vector<double> values) { return EmbeddingVector{std::move(values)}; }

ingest::QAPair pair(const std::string& id, const std::string& semester = "2023S1") {
  ingest::QAPair p;
  p.pair_id = id;
  p.semester = semester;
  p.question_subject = "s" + id;
  p.question_body = "b" + id;
  p.answer_body = "a";
  return p;
}

std::vector<std::vector<std::string>> members(const std::vector<ClusterAssignment>& clusters) {
  std::vector<std::vector<std::string>> out;
  for (const auto& c : clusters) out.push_back(c.member_pair_ids);
  return out;
}

}  // namespace

TEST(Dedup, CosineDistanceExamples) {
  EXPECT_EQ(cosine_distance(v({1, 0}), v({1, 0})), 0.0);
  EXPECT_NEAR(cosine_distance(v({1, 0}), v({0, 1})), 1.0, 1e-15);
  EXPECT_NEAR(cosine_distance(v({1, 1}), v({1, 0})), 1.0 - 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(cosine_distance(v({1, 1}), v({1, 0})), 0.2929, 1e-4);
  EXPECT_THROW(cosine_distance(v({0, 0}), v({1, 0})), Error);
  EXPECT_THROW(cosine_distance(v({1, 0, 0}), v({1, 0})), Error);
}

TEST(Dedup, ClusterExamples) {
  EXPECT_EQ(agglomerative_cluster({{"a", v({1, 2})}, {"b", v({1, 2})}}, 1e-9).size(), 1u);
  EXPECT_EQ(agglomerative_cluster({{"a", v({1, 0})}, {"b", v({0, 1})}}, 0.5).size(), 2u);
  EXPECT_THROW(agglomerative_cluster({}, 0.2), Error);
  EXPECT_THROW(agglomerative_cluster({{"a", v({1, 0})}}, 0.0), Error);
}

TEST(Dedup, TwoTightGroupsMatchBruteForceOracle) {
  const std::map<std::string, EmbeddingVector> vecs = {{"a", v({1.0, 0.05})},
                                                       {"b", v({1.0, -0.05})},
                                                       {"c", v({0.05, 1.0})},
                                                       {"d", v({-0.05, 1.0})}};
  std::vector<std::vector<double>> dist(4, std::vector<double>(4));
  std::vector<std::vector<double>> raw;
  for (const auto& [_, e] : vecs) raw.push_back(e.values);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) dist[i][j] = 1.0 - oracle::cosine(raw[i], raw[j]);
  }
  EXPECT_LT(dist[0][1], 0.1);
  EXPECT_GT(dist[0][2], 0.9);
  const auto want = oracle::average_linkage(dist, 0.2);
  ASSERT_EQ(want.size(), 2u);
  const auto got = agglomerative_cluster(vecs, 0.2);
  EXPECT_EQ(members(got), (std::vector<std::vector<std::string>>{{"a", "b"}, {"c", "d"}}));
}

TEST(Dedup, RandomPointsMatchBruteForceOracle) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + trial % 9;
    std::map<std::string, EmbeddingVector> vecs;
    std::vector<std::vector<double>> raw;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x{gauss(rng) + 2.0, gauss(rng), gauss(rng)};
      raw.push_back(x);
      vecs.emplace("p" + std::to_string(10 + i), v(x));
    }
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) dist[i][j] = i == j ? 0.0 : 1.0 - oracle::cosine(raw[i], raw[j]);
    }
    for (double t : {0.05, 0.2, 0.5}) {
      std::vector<std::vector<std::string>> want;
      for (const auto& c : oracle::average_linkage(dist, t)) {
        std::vector<std::string> ids;
        for (auto i : c) ids.push_back("p" + std::to_string(10 + i));
        want.push_back(ids);
      }
      EXPECT_EQ(members(agglomerative_cluster(vecs, t)), want) << "trial " << trial << " t=" << t;
    }
  }
}

TEST(Dedup, ClustersPartitionAndRepresentativeIsMember) {
  generation::StubEmbeddingProvider embedder;
  std::map<std::string, EmbeddingVector> vecs;
  const std::vector<std::string> texts = {"for loop matlab", "for loop matlab", "pointer arithmetic c",
                                          "malloc free memory", "for loops in matlab", "pointer arithmetic c"};
  for (std::size_t i = 0; i < texts.size(); ++i) vecs.emplace("q" + std::to_string(i), embedder.embed_one(texts[i]));
  const auto clusters = agglomerative_cluster(vecs, 0.2);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& c : clusters) {
    total += c.member_pair_ids.size();
    seen.insert(c.member_pair_ids.begin(), c.member_pair_ids.end());
    EXPECT_NE(std::find(c.member_pair_ids.begin(), c.member_pair_ids.end(), c.representative), c.member_pair_ids.end());
  }
  EXPECT_EQ(total, texts.size());
  EXPECT_EQ(seen.size(), texts.size());
}

TEST(Dedup, ThresholdMonotonicity) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::map<std::string, EmbeddingVector> vecs;
  for (int i = 0; i < 25; ++i) vecs.emplace("p" + std::to_string(i), v({gauss(rng) + 1.0, gauss(rng), gauss(rng), 0.5}));
  std::size_t previous = vecs.size() + 1;
  for (double t = 0.05; t <= 0.5001; t += 0.05) {
    const auto count = agglomerative_cluster(vecs, t).size();
    EXPECT_LE(count, previous) << t;
    previous = count;
  }
}

TEST(Dedup, DeduplicateExamples) {
  const std::vector<ingest::QAPair> three = {pair("a"), pair("b"), pair("c")};
  EXPECT_EQ(deduplicate(three, {{0, {"a", "b", "c"}, "a"}}).size(), 1u);
  const std::vector<ClusterAssignment> singletons = {{0, {"a"}, "a"}, {1, {"b"}, "b"}, {2, {"c"}, "c"}};
  EXPECT_EQ(deduplicate(three, singletons), three);

  std::vector<ingest::QAPair> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(pair("p" + std::to_string(i)));
  const std::vector<ClusterAssignment> sized = {{0, {"p0", "p1", "p2"}, "p0"},
                                                {1, {"p3", "p4", "p5"}, "p3"},
                                                {2, {"p6", "p7"}, "p6"},
                                                {3, {"p8"}, "p8"},
                                                {4, {"p9"}, "p9"}};
  EXPECT_EQ(deduplicate(ten, sized).size(), 5u);

  EXPECT_THROW(deduplicate(three, {{0, {"a", "b"}, "a"}}), Error);
  EXPECT_THROW(deduplicate(three, {{0, {"a", "b", "c"}, "a"}, {1, {"c"}, "c"}}), Error);
}

TEST(Dedup, RepresentativeIsFirstBySemesterThenId) {
  const std::vector<ingest::QAPair> pairs = {pair("a", "2023S2"), pair("z", "2022S1"), pair("m", "2022S1")};
  std::vector<ClusterAssignment> clusters = {{0, {"a", "m", "z"}, "a"}};
  choose_representatives(clusters, pairs);
  EXPECT_EQ(clusters[0].representative, "m");
  const auto kept = deduplicate(pairs, clusters);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].pair_id, "m");
}

TEST(Dedup, ReportShape) {
  const auto report = cluster_report(0.2, {{0, {"a", "b"}, "a"}});
  EXPECT_EQ(report.at("threshold"), 0.2);
  EXPECT_EQ(report.at("clusters").at(0).at("members"), nlohmann::json({"a", "b"}));
  EXPECT_EQ(report.at("clusters").at(0).at("representative"), "a");
  EXPECT_EQ(report.at("clusters").at(0).at("cluster_id"), 0);
}

TEST(Dedup, EmbeddingTextIsSubjectNewlineBody) {
  auto p = pair("x");
  EXPECT_EQ(embedding_text(p), "sx\nbx");
}
