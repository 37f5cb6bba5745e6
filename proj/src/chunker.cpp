#include "courseqa/chunker.hpp"

#include <algorithm>
#include <cstdio>

#include "courseqa/error.hpp"
#include "courseqa/text.hpp"

namespace courseqa::chunker {

namespace {

struct Fragment {
  std::size_t start;
  std::size_t length;
};

// Splits [start, start+length) on `sep`, keeping each separator at the end of
// the fragment it terminates. The empty separator yields code points.
std::vector<Fragment> split_keep(const std::string& text, Fragment span, const std::string& sep) {
  std::vector<Fragment> out;
  const std::size_t end = span.start + span.length;
  if (sep.empty()) {
    std::size_t pos = span.start;
    while (pos < end) {
      const std::size_t len =
          std::min(text::utf8_sequence_length(static_cast<unsigned char>(text[pos])), end - pos);
      out.push_back({pos, len});
      pos += len;
    }
    return out;
  }
  std::size_t pos = span.start;
  while (pos < end) {
    std::size_t hit = text.find(sep, pos);
    if (hit == std::string::npos || hit + sep.size() > end) {
      out.push_back({pos, end - pos});
      break;
    }
    const std::size_t stop = hit + sep.size();
    out.push_back({pos, stop - pos});
    pos = stop;
  }
  return out;
}

// Coarsest pieces no longer than `budget`, in order, covering `span` exactly.
void split_recursive(const std::string& text, Fragment span, const std::vector<std::string>& seps,
                     std::size_t level, std::size_t budget, std::vector<Fragment>& out) {
  if (span.length <= budget) {
    out.push_back(span);
    return;
  }
  for (const Fragment& piece : split_keep(text, span, seps[level])) {
    if (piece.length <= budget || level + 1 >= seps.size()) {
      out.push_back(piece);
    } else {
      split_recursive(text, piece, seps, level + 1, budget, out);
    }
  }
}

std::size_t snap_to_code_point(const std::string& text, std::size_t pos, std::size_t limit) {
  while (pos < limit && text::utf8_is_continuation(static_cast<unsigned char>(text[pos]))) ++pos;
  return pos;
}

}  // namespace

void ChunkerConfig::validate() const {
  if (max_chars == 0) throw Error("max_chars must be positive", "invalid_config");
  if (overlap_chars >= max_chars) throw Error("overlap_chars must be smaller than max_chars", "invalid_config");
  if (separators.empty() || !separators.back().empty()) {
    throw Error("separators must end with the empty string", "invalid_config");
  }
  // A code point is up to 4 bytes; the finest split must still fit a chunk body.
  if (max_chars - overlap_chars < 4) throw Error("max_chars - overlap_chars must be at least 4", "invalid_config");
}

std::string make_chunk_key(const std::string& doc_id, std::size_t chunk_index) {
  char index[16];
  std::snprintf(index, sizeof index, "%06zu", chunk_index);
  return doc_id + "#" + index;
}

std::string DocumentChunk::key() const { return make_chunk_key(doc_id, chunk_index); }

std::vector<DocumentChunk> split_document(const SourceDocument& doc, const ChunkerConfig& cfg) {
  cfg.validate();
  const std::string text = text::crlf_to_lf(doc.text);
  std::vector<DocumentChunk> chunks;
  if (text.empty()) return chunks;

  // Fragments are sized so that any carry plus one fragment fits a chunk.
  std::vector<Fragment> fragments;
  split_recursive(text, {0, text.size()}, cfg.separators, 0, cfg.max_chars - cfg.overlap_chars, fragments);

  std::size_t chunk_start = 0;  // includes the carried overlap
  std::size_t body_end = 0;
  auto emit = [&]() {
    DocumentChunk chunk;
    chunk.doc_id = doc.doc_id;
    chunk.chunk_index = chunks.size();
    chunk.start = chunk_start;
    chunk.end = body_end;
    chunk.text = text.substr(chunk_start, body_end - chunk_start);
    chunks.push_back(std::move(chunk));
  };

  bool first = true;
  for (const Fragment& frag : fragments) {
    if (first) {
      chunk_start = frag.start;
      body_end = frag.start + frag.length;
      first = false;
      continue;
    }
    if (frag.start + frag.length - chunk_start <= cfg.max_chars) {
      body_end = frag.start + frag.length;
      continue;
    }
    emit();
    const std::size_t prev_len = body_end - chunk_start;
    const std::size_t carry = std::min(cfg.overlap_chars, prev_len);
    chunk_start = snap_to_code_point(text, body_end - carry, body_end);
    body_end = frag.start + frag.length;
  }
  emit();
  return chunks;
}

std::string reconstruct(const std::vector<DocumentChunk>& chunks) {
  std::string out;
  std::size_t covered = 0;
  for (const auto& chunk : chunks) {
    const std::size_t skip = chunk.chunk_index == 0 ? 0 : covered - chunk.start;
    out.append(chunk.text, skip, std::string::npos);
    covered = chunk.end;
  }
  return out;
}

nlohmann::json to_json(const DocumentChunk& chunk) {
  return {{"doc_id", chunk.doc_id},
          {"chunk_index", chunk.chunk_index},
          {"text", chunk.text},
          {"start", chunk.start},
          {"end", chunk.end}};
}

DocumentChunk chunk_from_json(const nlohmann::json& record) {
  DocumentChunk chunk;
  chunk.doc_id = record.at("doc_id").get<std::string>();
  chunk.chunk_index = record.at("chunk_index").get<std::size_t>();
  chunk.text = record.at("text").get<std::string>();
  chunk.start = record.at("start").get<std::size_t>();
  chunk.end = record.at("end").get<std::size_t>();
  return chunk;
}

std::vector<SourceDocument> load_documents(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("documents directory '" + dir.string() + "' does not exist", "missing_input");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".md" || ext == ".txt")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SourceDocument> docs;
  for (const auto& file : files) {
    SourceDocument doc;
    doc.doc_id = file.stem().string();
    doc.text = io::read_file(file);
    const std::string normalized = text::crlf_to_lf(doc.text);
    std::size_t pos = 0;
    while (pos < normalized.size()) {
      const std::size_t nl = normalized.find('\n', pos);
      const std::string line = text::trim(normalized.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
      if (!line.empty()) {
        doc.title = line;
        break;
      }
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
    if (!text::trim(doc.text).empty()) docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace courseqa::chunker
