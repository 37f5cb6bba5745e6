#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace courseqa::chunker {

struct SourceDocument {
  std::string doc_id;
  std::string title;
  std::string text;
};

// Lengths and offsets are bytes of the LF-normalized text.
struct DocumentChunk {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  // Sortable key unique within a corpus: "<doc_id>#<zero-padded index>".
  std::string key() const;
  bool operator==(const DocumentChunk&) const = default;
};

struct ChunkerConfig {
  std::size_t max_chars = 1000;
  std::size_t overlap_chars = 100;
  std::vector<std::string> separators{"\n\n", "\n", " ", ""};

  // Throws courseqa::Error unless overlap < max and the list ends with "".
  void validate() const;
};

// Recursive delimiter-hierarchy split with greedy merging. Each chunk after
// the first starts with the tail (up to overlap_chars) of its predecessor,
// and the overlap counts toward max_chars.
std::vector<DocumentChunk> split_document(const SourceDocument& doc, const ChunkerConfig& cfg = {});

// Rebuilds the normalized source from chunk spans, dropping each overlap prefix.
std::string reconstruct(const std::vector<DocumentChunk>& chunks);

std::string make_chunk_key(const std::string& doc_id, std::size_t chunk_index);

nlohmann::json to_json(const DocumentChunk& chunk);
DocumentChunk chunk_from_json(const nlohmann::json& record);

// Every *.md / *.txt file directly under `dir`, sorted by file name; doc_id is
// the file stem and title the first non-empty line.
std::vector<SourceDocument> load_documents(const std::filesystem::path& dir);

}  // namespace courseqa::chunker
