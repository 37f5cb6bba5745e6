#include "courseqa/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "courseqa/error.hpp"
#include "courseqa/text.hpp"

namespace courseqa::ingest {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kPostKindCount> kKindNames{
    "question", "i_answer", "s_answer", "followup", "followup_response", "note"};

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string at_line(std::size_t line) { return " at line " + std::to_string(line); }

const json& require(const json& record, const char* key, std::size_t line) {
  const auto it = record.find(key);
  if (it == record.end()) throw Error(std::string("missing field '") + key + "'" + at_line(line), "schema");
  return *it;
}

std::string require_string(const json& record, const char* key, std::size_t line) {
  const json& value = require(record, key, line);
  if (!value.is_string()) throw Error(std::string("field '") + key + "' must be a string" + at_line(line), "schema");
  return value.get<std::string>();
}

// Latest by last revision time; equal times break toward the larger post_id.
bool later_than(const ForumPost& a, const ForumPost& b) {
  if (a.latest().time != b.latest().time) return a.latest().time > b.latest().time;
  return a.post_id > b.post_id;
}

}  // namespace

std::string_view to_string(PostKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::string_view to_string(AuthorRole role) {
  return role == AuthorRole::instructor ? "instructor" : "student";
}

std::optional<PostKind> parse_post_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<PostKind>(i);
  }
  return std::nullopt;
}

std::optional<AuthorRole> parse_author_role(std::string_view name) {
  if (name == "instructor") return AuthorRole::instructor;
  if (name == "student") return AuthorRole::student;
  return std::nullopt;
}

std::optional<Timestamp> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  // YYYY-MM-DDTHH:MM:SS
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  int y, mo, d, h, mi, se;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) ||
      !parse_int(s.substr(8, 2), d) || !parse_int(s.substr(11, 2), h) ||
      !parse_int(s.substr(14, 2), mi) || !parse_int(s.substr(17, 2), se)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 60) return std::nullopt;

  std::size_t pos = 19;
  int millis = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 3) millis = millis * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 3; ++i) millis *= 10;
  }
  minutes offset{0};
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos = s.size();
    } else if ((s[pos] == '+' || s[pos] == '-') && s.size() - pos == 6 && s[pos + 3] == ':') {
      int oh, om;
      if (!parse_int(s.substr(pos + 1, 2), oh) || !parse_int(s.substr(pos + 4, 2), om)) return std::nullopt;
      offset = hours{oh} + minutes{om};
      if (s[pos] == '-') offset = -offset;
    } else {
      return std::nullopt;
    }
  }
  return Timestamp{sys_days{ymd} + hours{h} + minutes{mi} + seconds{se} + milliseconds{millis} - offset};
}

ForumPost post_from_json(const json& record, std::size_t line) {
  if (!record.is_object()) throw Error("record is not an object" + at_line(line), "schema");
  ForumPost post;
  post.post_id = require_string(record, "post_id", line);
  post.semester = require_string(record, "semester", line);

  const std::string kind = require_string(record, "kind", line);
  const auto parsed_kind = parse_post_kind(kind);
  if (!parsed_kind) throw Error("unknown kind '" + kind + "'" + at_line(line), "schema");
  post.kind = *parsed_kind;

  post.subject = record.contains("subject") && record["subject"].is_string()
                     ? record["subject"].get<std::string>()
                     : std::string();
  if (const auto it = record.find("folders"); it != record.end() && it->is_array()) {
    for (const auto& folder : *it) {
      if (!folder.is_string()) throw Error("folders must hold strings" + at_line(line), "schema");
      post.folders.push_back(folder.get<std::string>());
    }
  }
  if (const auto it = record.find("has_images"); it != record.end()) {
    if (!it->is_boolean()) throw Error("has_images must be a boolean" + at_line(line), "schema");
    post.has_images = it->get<bool>();
  }
  const std::string role = require_string(record, "author_role", line);
  const auto parsed_role = parse_author_role(role);
  if (!parsed_role) throw Error("unknown author_role '" + role + "'" + at_line(line), "schema");
  post.author_role = *parsed_role;

  if (const auto it = record.find("parent_id"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw Error("parent_id must be a string or null" + at_line(line), "schema");
    post.parent_id = it->get<std::string>();
  }
  if (post.is_answer() && !post.parent_id) {
    throw Error("answer '" + post.post_id + "' has no parent_id" + at_line(line), "schema");
  }

  const json& revisions = require(record, "revisions", line);
  if (!revisions.is_array() || revisions.empty()) {
    throw Error("revisions must be a non-empty array" + at_line(line), "schema");
  }
  for (const auto& rev : revisions) {
    if (!rev.is_object()) throw Error("revision is not an object" + at_line(line), "schema");
    Revision revision;
    revision.timestamp = require_string(rev, "ts", line);
    revision.body = require_string(rev, "body", line);
    const auto time = parse_iso8601(revision.timestamp);
    if (!time) throw Error("bad timestamp '" + revision.timestamp + "'" + at_line(line), "schema");
    revision.time = *time;
    if (!post.revisions.empty() && revision.time < post.revisions.back().time) {
      throw Error("revisions out of order" + at_line(line), "schema");
    }
    post.revisions.push_back(std::move(revision));
  }
  post.body = post.revisions.back().body;
  return post;
}

std::vector<ForumPost> parse_forum_export(const std::filesystem::path& path) {
  std::vector<ForumPost> posts;
  io::for_each_jsonl(path, [&](const json& record, std::size_t line) {
    posts.push_back(post_from_json(record, line));
  });
  return posts;
}

std::vector<QAPair> extract_qa_pairs(const std::vector<ForumPost>& posts,
                                     std::vector<std::string>* warnings) {
  std::map<std::string_view, const ForumPost*> questions;
  for (const auto& post : posts) {
    if (post.kind == PostKind::question) questions.emplace(post.post_id, &post);
  }

  struct Best {
    const ForumPost* instructor = nullptr;
    const ForumPost* student = nullptr;
  };
  std::map<std::string_view, Best> best;
  for (const auto& post : posts) {
    if (!post.is_answer()) continue;
    const auto q = questions.find(*post.parent_id);
    if (q == questions.end()) {
      if (warnings) warnings->push_back("answer '" + post.post_id + "' references unknown question '" + *post.parent_id + "'; skipped");
      continue;
    }
    Best& slot = best[q->first];
    const ForumPost*& current = post.kind == PostKind::i_answer ? slot.instructor : slot.student;
    if (current == nullptr || later_than(post, *current)) current = &post;
  }

  std::vector<QAPair> pairs;
  for (const auto& post : posts) {
    if (post.kind != PostKind::question || post.has_images) continue;
    const auto it = best.find(post.post_id);
    if (it == best.end()) continue;
    const ForumPost* answer = it->second.instructor ? it->second.instructor : it->second.student;
    if (answer->has_images) continue;
    if (text::trim(answer->body).empty()) {
      if (warnings) warnings->push_back("answer '" + answer->post_id + "' is empty; question '" + post.post_id + "' dropped");
      continue;
    }
    QAPair pair;
    pair.pair_id = post.post_id;
    pair.question_subject = post.subject;
    pair.question_body = post.body;
    pair.answer_body = answer->body;
    pair.answer_provenance = answer->kind == PostKind::i_answer ? AuthorRole::instructor : AuthorRole::student;
    pair.semester = post.semester;
    pair.folders = post.folders;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

double CorpusStats::proportion(PostKind kind) const {
  if (total_posts == 0) return 0.0;
  return static_cast<double>(of(kind).post_count) / static_cast<double>(total_posts);
}

CorpusStats corpus_stats(const std::vector<ForumPost>& posts) {
  std::array<std::vector<double>, kPostKindCount> words;
  for (const auto& post : posts) {
    words[static_cast<std::size_t>(post.kind)].push_back(static_cast<double>(text::word_count(post.body)));
  }
  CorpusStats stats;
  stats.total_posts = posts.size();
  for (std::size_t k = 0; k < kPostKindCount; ++k) {
    const auto& w = words[k];
    KindStats& s = stats.per_kind[k];
    s.post_count = w.size();
    if (w.empty()) continue;
    double sum = 0.0;
    for (double x : w) sum += x;
    s.total_tokens = static_cast<std::size_t>(sum);
    s.mean_words = sum / static_cast<double>(w.size());
    if (w.size() > 1) {
      double ss = 0.0;
      for (double x : w) ss += (x - s.mean_words) * (x - s.mean_words);
      s.stdev_words = std::sqrt(ss / static_cast<double>(w.size() - 1));
    }
  }
  return stats;
}

json to_json(const QAPair& pair) {
  return json{{"pair_id", pair.pair_id},
              {"question_subject", pair.question_subject},
              {"question_body", pair.question_body},
              {"answer_body", pair.answer_body},
              {"answer_provenance", to_string(pair.answer_provenance)},
              {"semester", pair.semester},
              {"folders", pair.folders}};
}

QAPair qa_pair_from_json(const json& record) {
  QAPair pair;
  pair.pair_id = record.at("pair_id").get<std::string>();
  pair.question_subject = record.at("question_subject").get<std::string>();
  pair.question_body = record.at("question_body").get<std::string>();
  pair.answer_body = record.at("answer_body").get<std::string>();
  const auto role = parse_author_role(record.at("answer_provenance").get<std::string>());
  if (!role) throw Error("unknown answer_provenance in QA pair '" + pair.pair_id + "'", "schema");
  pair.answer_provenance = *role;
  pair.semester = record.at("semester").get<std::string>();
  pair.folders = record.at("folders").get<std::vector<std::string>>();
  return pair;
}

json to_json(const CorpusStats& stats) {
  json kinds = json::object();
  for (std::size_t k = 0; k < kPostKindCount; ++k) {
    const auto& s = stats.per_kind[k];
    kinds[std::string(kKindNames[k])] = json{{"post_count", s.post_count},
                                             {"proportion", stats.proportion(static_cast<PostKind>(k))},
                                             {"mean_words", s.mean_words},
                                             {"stdev_words", s.stdev_words},
                                             {"total_tokens", s.total_tokens}};
  }
  return json{{"total_posts", stats.total_posts}, {"kinds", kinds}};
}

void write_qa_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs) {
  std::vector<json> records;
  records.reserve(pairs.size());
  for (const auto& pair : pairs) records.push_back(to_json(pair));
  io::write_file(path, io::to_jsonl(records));
}

std::vector<QAPair> read_qa_pairs(const std::filesystem::path& path) {
  std::vector<QAPair> pairs;
  io::for_each_jsonl(path, [&](const json& record, std::size_t line) {
    try {
      pairs.push_back(qa_pair_from_json(record));
    } catch (const json::exception& e) {
      throw Error("bad QA pair at line " + std::to_string(line) + ": " + e.what(), "schema");
    }
  });
  return pairs;
}

}  // namespace courseqa::ingest
