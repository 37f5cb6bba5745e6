#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "courseqa/ingest.hpp"
#include "json.hpp"

namespace courseqa::preference {

// DPO training record: output2 (final revision) is preferred over output1
// (first revision).
struct PreferencePair {
  std::string instruction;  // "{subject}\n{question}"
  std::string output1;
  std::string output2;
  int preference = 2;
  // Not part of the exported record; written to a metadata sidecar.
  std::string answer_post_id;
  ingest::AuthorRole answer_provenance = ingest::AuthorRole::student;
};

std::string instruction_text(std::string_view subject, std::string_view question);

// One pair per edited answer on an image-free question: first vs. last
// revision. Edits that only change whitespace are skipped.
std::vector<PreferencePair> build_preference_pairs(const std::vector<ingest::ForumPost>& posts,
                                                   std::vector<std::string>* warnings = nullptr);

nlohmann::json sft_record(const ingest::QAPair& pair);
nlohmann::json dpo_record(const PreferencePair& pair);
nlohmann::json dpo_metadata_record(const PreferencePair& pair);

// Both exporters throw courseqa::Error("empty dataset") on empty input and
// return the number of records written.
std::size_t export_sft_dataset(const std::vector<ingest::QAPair>& pairs, const std::filesystem::path& path);
std::size_t export_dpo_dataset(const std::vector<PreferencePair>& prefs, const std::filesystem::path& path);

std::vector<PreferencePair> read_dpo_dataset(const std::filesystem::path& path);

}  // namespace courseqa::preference
