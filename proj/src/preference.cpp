#include "courseqa/preference.hpp"

#include <map>

#include "courseqa/error.hpp"
#include "courseqa/text.hpp"

namespace courseqa::preference {

using nlohmann::json;

std::string instruction_text(std::string_view subject, std::string_view question) {
  std::string out(subject);
  out.push_back('\n');
  out.append(question);
  return out;
}

std::vector<PreferencePair> build_preference_pairs(const std::vector<ingest::ForumPost>& posts,
                                                   std::vector<std::string>* warnings) {
  std::map<std::string_view, const ingest::ForumPost*> questions;
  for (const auto& post : posts) {
    if (post.kind == ingest::PostKind::question) questions.emplace(post.post_id, &post);
  }
  std::vector<PreferencePair> pairs;
  for (const auto& post : posts) {
    if (!post.is_answer()) continue;
    const auto q = questions.find(*post.parent_id);
    if (q == questions.end()) {
      if (warnings) warnings->push_back("answer '" + post.post_id + "' references unknown question '" + *post.parent_id + "'; skipped");
      continue;
    }
    const ingest::ForumPost& question = *q->second;
    if (question.has_images || post.revisions.size() < 2) continue;
    const std::string& first = post.revisions.front().body;
    const std::string& last = post.revisions.back().body;
    if (text::normalize_whitespace(first) == text::normalize_whitespace(last)) continue;

    PreferencePair pair;
    pair.instruction = instruction_text(question.subject, question.body);
    pair.output1 = first;
    pair.output2 = last;
    pair.answer_post_id = post.post_id;
    pair.answer_provenance =
        post.kind == ingest::PostKind::i_answer ? ingest::AuthorRole::instructor : ingest::AuthorRole::student;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

json sft_record(const ingest::QAPair& pair) {
  return json{{"instruction", instruction_text(pair.question_subject, pair.question_body)},
              {"output", pair.answer_body}};
}

// Key order follows the published format: instruction, output1, output2, preference.
json dpo_record(const PreferencePair& pair) {
  json record = json::object();
  record["instruction"] = pair.instruction;
  record["output1"] = pair.output1;
  record["output2"] = pair.output2;
  record["preference"] = pair.preference;
  return record;
}

json dpo_metadata_record(const PreferencePair& pair) {
  return json{{"answer_post_id", pair.answer_post_id},
              {"answer_provenance", ingest::to_string(pair.answer_provenance)}};
}

std::size_t export_sft_dataset(const std::vector<ingest::QAPair>& pairs, const std::filesystem::path& path) {
  if (pairs.empty()) throw Error("empty dataset", "empty_dataset");
  std::vector<json> records;
  records.reserve(pairs.size());
  for (const auto& pair : pairs) records.push_back(sft_record(pair));
  io::write_file(path, io::to_jsonl(records));
  return records.size();
}

std::size_t export_dpo_dataset(const std::vector<PreferencePair>& prefs, const std::filesystem::path& path) {
  if (prefs.empty()) throw Error("empty dataset", "empty_dataset");
  std::vector<json> records;
  records.reserve(prefs.size());
  for (const auto& pair : prefs) records.push_back(dpo_record(pair));
  io::write_file(path, io::to_jsonl(records));
  return records.size();
}

std::vector<PreferencePair> read_dpo_dataset(const std::filesystem::path& path) {
  std::vector<PreferencePair> prefs;
  io::for_each_jsonl(path, [&](const json& record, std::size_t line) {
    try {
      PreferencePair pair;
      pair.instruction = record.at("instruction").get<std::string>();
      pair.output1 = record.at("output1").get<std::string>();
      pair.output2 = record.at("output2").get<std::string>();
      pair.preference = record.at("preference").get<int>();
      prefs.push_back(std::move(pair));
    } catch (const json::exception& e) {
      throw Error("bad DPO record at line " + std::to_string(line) + ": " + e.what(), "schema");
    }
  });
  return prefs;
}

}  // namespace courseqa::preference
