#include <gtest/gtest.h>

#include <cmath>

#include "courseqa/error.hpp"
#include "courseqa/ingest.hpp"
#include "support/builders.hpp"

using namespace courseqa;
using namespace courseqa::ingest;
using fixture::post;

namespace {

const std::filesystem::path kMini = std::filesystem::path(COURSEQA_FIXTURE_DIR) / "mini";

std::string record(const std::string& id, const std::string& kind, const std::string& parent,
                   const std::string& body = "text") {
  return R"({"post_id":")" + id + R"(","semester":"2023S1","kind":")" + kind +
         R"(","subject":"s","folders":[],"has_images":false,"author_role":"student","parent_id":)" +
         (parent.empty() ? "null" : "\"" + parent + "\"") +
         R"(,"revisions":[{"ts":"2023-01-01T00:00:00Z","body":")" + body + R"("}],"extra":1})";
}

}  // namespace

TEST(Ingest, Iso8601) {
  const auto a = parse_iso8601("2023-03-01T10:00:00Z");
  const auto b = parse_iso8601("2023-03-01T12:00:00+02:00");
  const auto c = parse_iso8601("2023-03-01T10:00:00.250");
  ASSERT_TRUE(a && b && c);
  EXPECT_EQ(*a, *b);
  EXPECT_EQ((*c - *a).count(), 250);
  EXPECT_FALSE(parse_iso8601("yesterday"));
  EXPECT_FALSE(parse_iso8601("2023-13-01T00:00:00Z"));
}

TEST(Ingest, ParsesQuestionAndAnswer) {
  const auto dir = fixture::scratch("ingest_parse");
  const auto path = fixture::write(dir / "f.jsonl", record("q", "question", "") + "\n" + record("a", "i_answer", "q") + "\n");
  const auto posts = parse_forum_export(path);
  ASSERT_EQ(posts.size(), 2u);
  EXPECT_EQ(posts[1].kind, PostKind::i_answer);
  EXPECT_EQ(posts[1].parent_id, "q");
  EXPECT_EQ(posts[0].body, "text");
}

TEST(Ingest, UnknownKindNamesValueAndLine) {
  const auto dir = fixture::scratch("ingest_kind");
  const auto path = fixture::write(dir / "f.jsonl", record("q", "question", "") + "\n" + record("x", "poll", "") + "\n");
  try {
    parse_forum_export(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unknown kind 'poll' at line 2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MalformedLineIsReported) {
  const auto dir = fixture::scratch("ingest_bad");
  const auto path = fixture::write(dir / "f.jsonl", record("q", "question", "") + "\n{\"post_id\":\n");
  try {
    parse_forum_export(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, EmptyFileGivesNoPosts) {
  const auto dir = fixture::scratch("ingest_empty");
  EXPECT_TRUE(parse_forum_export(fixture::write(dir / "f.jsonl", "")).empty());
}

TEST(Ingest, InstructorAnswerWins) {
  const std::vector<ForumPost> posts = {post("q", PostKind::question, std::nullopt, {"Q?"}),
                                        post("s", PostKind::s_answer, "q", {"student"}, false, 30),
                                        post("i", PostKind::i_answer, "q", {"instructor"}, false, 1)};
  const auto pairs = extract_qa_pairs(posts);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].answer_body, "instructor");
  EXPECT_EQ(pairs[0].answer_provenance, AuthorRole::instructor);
  EXPECT_EQ(pairs[0].pair_id, "q");
}

TEST(Ingest, LatestStudentAnswerWins) {
  const std::vector<ForumPost> posts = {post("q", PostKind::question, std::nullopt, {"Q?"}),
                                        post("s2", PostKind::s_answer, "q", {"later"}, false, 20),
                                        post("s1", PostKind::s_answer, "q", {"earlier"}, false, 10)};
  const auto pairs = extract_qa_pairs(posts);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].answer_body, "later");
}

TEST(Ingest, LatestIsJudgedByLastRevision) {
  const std::vector<ForumPost> posts = {post("q", PostKind::question, std::nullopt, {"Q?"}),
                                        post("a", PostKind::s_answer, "q", {"old", "edited late"}, false, 40),
                                        post("b", PostKind::s_answer, "q", {"mid"}, false, 30)};
  EXPECT_EQ(extract_qa_pairs(posts).at(0).answer_body, "edited late");
}

TEST(Ingest, TimestampTieBreaksTowardLargerPostId) {
  const std::vector<ForumPost> posts = {post("q", PostKind::question, std::nullopt, {"Q?"}),
                                        post("b", PostKind::s_answer, "q", {"from b"}, false, 5),
                                        post("a", PostKind::s_answer, "q", {"from a"}, false, 5)};
  EXPECT_EQ(extract_qa_pairs(posts).at(0).answer_body, "from b");
}

TEST(Ingest, ImagesAndUnansweredAreDropped) {
  const std::vector<ForumPost> posts = {post("q1", PostKind::question, std::nullopt, {"img?"}, true),
                                        post("a1", PostKind::i_answer, "q1", {"ans"}),
                                        post("q2", PostKind::question, std::nullopt, {"nobody answered"}),
                                        post("q3", PostKind::question, std::nullopt, {"answer has image"}),
                                        post("a3", PostKind::i_answer, "q3", {"see picture"}, true),
                                        post("f", PostKind::followup, "q2", {"bump"}),
                                        post("n", PostKind::note, std::nullopt, {"note"})};
  EXPECT_TRUE(extract_qa_pairs(posts).empty());
}

TEST(Ingest, DanglingParentWarnsAndSkips) {
  const std::vector<ForumPost> posts = {post("q", PostKind::question, std::nullopt, {"Q?"}),
                                        post("a", PostKind::s_answer, "ghost", {"lost"})};
  std::vector<std::string> warnings;
  EXPECT_TRUE(extract_qa_pairs(posts, &warnings).empty());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("ghost"), std::string::npos);
}

TEST(Ingest, MiniFixtureHonoursInstructorPriority) {
  const auto posts = parse_forum_export(kMini / "forum.jsonl");
  const auto pairs = extract_qa_pairs(posts);
  std::size_t questions = 0;
  for (const auto& p : posts) questions += p.kind == PostKind::question;
  EXPECT_LE(pairs.size(), questions);
  for (const auto& pair : pairs) {
    bool has_instructor = false;
    for (const auto& p : posts) {
      has_instructor |= p.kind == PostKind::i_answer && p.parent_id == pair.pair_id;
    }
    if (has_instructor) EXPECT_EQ(pair.answer_provenance, AuthorRole::instructor) << pair.pair_id;
    EXPECT_FALSE(pair.answer_body.empty());
  }
}

TEST(Ingest, SerializedOutputIsDeterministic) {
  const auto dir = fixture::scratch("ingest_det");
  const auto pairs = extract_qa_pairs(parse_forum_export(kMini / "forum.jsonl"));
  write_qa_pairs(dir / "a.jsonl", pairs);
  write_qa_pairs(dir / "b.jsonl", extract_qa_pairs(parse_forum_export(kMini / "forum.jsonl")));
  EXPECT_EQ(io::read_file(dir / "a.jsonl"), io::read_file(dir / "b.jsonl"));
  EXPECT_EQ(read_qa_pairs(dir / "a.jsonl"), pairs);
}

TEST(Ingest, CorpusStats) {
  EXPECT_EQ(corpus_stats({}).total_posts, 0u);
  EXPECT_EQ(corpus_stats({}).proportion(PostKind::question), 0.0);

  const auto one = corpus_stats({post("q", PostKind::question, std::nullopt, {"hello world"})});
  EXPECT_EQ(one.of(PostKind::question).mean_words, 2.0);

  const auto four = corpus_stats({post("a", PostKind::question, std::nullopt, {"one"}),
                                  post("b", PostKind::question, std::nullopt, {"one two"}),
                                  post("c", PostKind::question, std::nullopt, {"one two three"}),
                                  post("n", PostKind::note, std::nullopt, {"x"})});
  EXPECT_DOUBLE_EQ(four.proportion(PostKind::question), 0.75);
  EXPECT_EQ(four.of(PostKind::question).post_count, 3u);
  EXPECT_DOUBLE_EQ(four.of(PostKind::question).stdev_words, 1.0);
  EXPECT_EQ(four.of(PostKind::question).total_tokens, 6u);
  std::size_t sum = 0;
  for (const auto& k : four.per_kind) sum += k.post_count;
  EXPECT_EQ(sum, four.total_posts);
}
