#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace courseqa::ingest {

enum class PostKind { question, i_answer, s_answer, followup, followup_response, note };
inline constexpr std::size_t kPostKindCount = 6;

enum class AuthorRole { instructor, student };

std::string_view to_string(PostKind kind);
std::string_view to_string(AuthorRole role);
std::optional<PostKind> parse_post_kind(std::string_view name);
std::optional<AuthorRole> parse_author_role(std::string_view name);

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// Accepts YYYY-MM-DDTHH:MM:SS[.fraction][Z|+HH:MM|-HH:MM]; a missing offset is UTC.
std::optional<Timestamp> parse_iso8601(std::string_view text);

struct Revision {
  std::string timestamp;  // as written in the export
  Timestamp time;
  std::string body;
};

struct ForumPost {
  std::string post_id;
  std::string semester;
  PostKind kind = PostKind::question;
  std::string subject;
  std::string body;  // always the last revision's body
  std::vector<std::string> folders;
  bool has_images = false;
  AuthorRole author_role = AuthorRole::student;
  std::optional<std::string> parent_id;
  std::vector<Revision> revisions;

  bool is_answer() const { return kind == PostKind::i_answer || kind == PostKind::s_answer; }
  const Revision& latest() const { return revisions.back(); }
};

struct QAPair {
  std::string pair_id;
  std::string question_subject;
  std::string question_body;
  std::string answer_body;
  AuthorRole answer_provenance = AuthorRole::student;
  std::string semester;
  std::vector<std::string> folders;

  bool operator==(const QAPair&) const = default;
};

struct KindStats {
  std::size_t post_count = 0;
  double mean_words = 0.0;
  double stdev_words = 0.0;  // sample stdev, 0 for fewer than two posts
  std::size_t total_tokens = 0;  // whitespace-token proxy
};

struct CorpusStats {
  std::array<KindStats, kPostKindCount> per_kind{};
  std::size_t total_posts = 0;

  const KindStats& of(PostKind kind) const { return per_kind[static_cast<std::size_t>(kind)]; }
  // Fraction of all posts that are of `kind`; 0 for an empty corpus.
  double proportion(PostKind kind) const;
};

// Parses a JSON-lines forum export. Throws courseqa::Error naming the line on
// malformed records or unknown enumeration values.
std::vector<ForumPost> parse_forum_export(const std::filesystem::path& path);
ForumPost post_from_json(const nlohmann::json& record, std::size_t line_number);

// Ground-truth selection: the latest instructor answer wins, otherwise the
// latest student answer. Unanswered and image-bearing threads are dropped.
// Dangling answer parents are reported through `warnings` and skipped.
std::vector<QAPair> extract_qa_pairs(const std::vector<ForumPost>& posts,
                                     std::vector<std::string>* warnings = nullptr);

CorpusStats corpus_stats(const std::vector<ForumPost>& posts);

nlohmann::json to_json(const QAPair& pair);
QAPair qa_pair_from_json(const nlohmann::json& record);
nlohmann::json to_json(const CorpusStats& stats);

void write_qa_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs);
std::vector<QAPair> read_qa_pairs(const std::filesystem::path& path);

}  // namespace courseqa::ingest
