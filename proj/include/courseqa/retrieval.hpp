#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "courseqa/chunker.hpp"
#include "courseqa/embedding.hpp"
#include "json.hpp"

namespace courseqa::retrieval {

using chunker::DocumentChunk;

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredKey {
  std::string key;
  double score = 0.0;
  bool operator==(const ScoredKey&) const = default;
};

// Okapi BM25 with the +1-smoothed IDF, over chunk keys.
class Bm25Index {
 public:
  struct Posting {
    std::size_t doc;  // position in keys()
    std::size_t tf;
  };

  Bm25Index() = default;
  static Bm25Index build(const std::vector<DocumentChunk>& chunks, Bm25Params params = {});

  // Per-chunk token lists in key order; used by build() and by loaders.
  static Bm25Index from_tokens(std::vector<std::string> keys, const std::vector<std::vector<std::string>>& tokens,
                               Bm25Params params = {});

  const Bm25Params& params() const { return params_; }
  const std::vector<std::string>& keys() const { return keys_; }
  std::size_t size() const { return keys_.size(); }
  double average_length() const { return avg_len_; }
  std::size_t document_frequency(const std::string& term) const;
  double idf(const std::string& term) const;

  // Sum over query terms (repeats count) of idf * saturated tf. Throws on
  // unknown keys.
  double score(const std::vector<std::string>& query_terms, const std::string& key) const;

  // Positive-score chunks, best first, ties by ascending key; at most k.
  std::vector<ScoredKey> top_k(const std::vector<std::string>& query_terms, std::size_t k) const;
  std::vector<ScoredKey> top_k(std::string_view query, std::size_t k) const;

  nlohmann::json header() const;
  void save(const std::filesystem::path& dir) const;
  static Bm25Index load(const std::filesystem::path& dir);

 private:
  double term_weight(double idf, std::size_t tf, std::size_t len) const;
  std::size_t doc_index(const std::string& key) const;

  Bm25Params params_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> key_index_;
  std::vector<std::size_t> lengths_;
  double avg_len_ = 0.0;
  std::map<std::string, std::vector<Posting>> postings_;  // sorted by doc
};

// Exact cosine scan over one vector per chunk.
class DenseIndex {
 public:
  DenseIndex() = default;
  static DenseIndex build(const std::map<std::string, EmbeddingVector>& vectors);

  const std::vector<std::string>& keys() const { return keys_; }
  std::size_t size() const { return keys_.size(); }
  std::size_t dim() const { return dim_; }
  EmbeddingVector vector(std::size_t row) const;

  // Best cosine similarity first, ties by ascending key; at most k.
  std::vector<ScoredKey> top_k(const EmbeddingVector& query, std::size_t k) const;

  nlohmann::json header() const;
  void save(const std::filesystem::path& dir) const;
  static DenseIndex load(const std::filesystem::path& dir);

 private:
  std::vector<std::string> keys_;
  std::size_t dim_ = 0;
  std::vector<double> rows_;   // row-major, as given
  std::vector<double> norms_;  // per row
};

enum class Source { dense, bm25, both };
std::string_view to_string(Source source);

struct RetrievedChunk {
  DocumentChunk chunk;
  double score = 0.0;  // score from the list it first appeared in
  Source source = Source::dense;
};

using RetrievedContext = std::vector<RetrievedChunk>;

inline constexpr std::size_t kDefaultDenseK = 3;
inline constexpr std::size_t kDefaultBm25K = 2;

class ChunkStore {
 public:
  ChunkStore() = default;
  explicit ChunkStore(std::vector<DocumentChunk> chunks);
  const DocumentChunk& at(const std::string& key) const;
  const std::map<std::string, DocumentChunk>& all() const { return chunks_; }
  std::vector<DocumentChunk> ordered() const;
  std::size_t size() const { return chunks_.size(); }

  void save(const std::filesystem::path& dir) const;
  static ChunkStore load(const std::filesystem::path& dir);

 private:
  std::map<std::string, DocumentChunk> chunks_;
};

// Dense top-dense_k followed by BM25 top-bm25_k; a chunk already taken from
// the dense list is not repeated and is marked Source::both. A zero k skips
// that retriever; both zero is an error.
RetrievedContext hybrid_retrieve(const DenseIndex& dense, const Bm25Index& bm25, const ChunkStore& chunks,
                                 std::string_view query, const EmbeddingVector& query_vec,
                                 std::size_t dense_k = kDefaultDenseK, std::size_t bm25_k = kDefaultBm25K);

// Text both retrievers see for a forum question.
std::string query_text(std::string_view subject, std::string_view body);

}  // namespace courseqa::retrieval
