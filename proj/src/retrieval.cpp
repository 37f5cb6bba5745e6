#include "courseqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "courseqa/error.hpp"
#include "courseqa/kernels.hpp"
#include "courseqa/text.hpp"

namespace courseqa::retrieval {

using nlohmann::json;

namespace {

constexpr const char* kBm25Header = "bm25.json";
constexpr const char* kBm25Docs = "bm25_docs.jsonl";
constexpr const char* kBm25Postings = "bm25_postings.jsonl";
constexpr const char* kDenseHeader = "dense.json";
constexpr const char* kDenseVectors = "dense_vectors.jsonl";
constexpr const char* kChunks = "chunks.jsonl";

void sort_ranked(std::vector<ScoredKey>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const ScoredKey& a, const ScoredKey& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  });
}

std::filesystem::path require_file(const std::filesystem::path& dir, const char* name) {
  auto path = dir / name;
  if (!std::filesystem::exists(path)) {
    throw Error("index file '" + path.string() + "' is missing; run `courseqa index` first", "missing_artifact");
  }
  return path;
}

}  // namespace

// ---------------------------------------------------------------------------
// BM25

Bm25Index Bm25Index::build(const std::vector<DocumentChunk>& chunks, Bm25Params params) {
  std::vector<const DocumentChunk*> sorted;
  for (const auto& chunk : chunks) sorted.push_back(&chunk);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key() < b->key(); });
  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> tokens;
  for (const auto* chunk : sorted) {
    keys.push_back(chunk->key());
    tokens.push_back(text::tokenize(chunk->text));
  }
  return from_tokens(std::move(keys), tokens, params);
}

Bm25Index Bm25Index::from_tokens(std::vector<std::string> keys, const std::vector<std::vector<std::string>>& tokens,
                                 Bm25Params params) {
  if (keys.size() != tokens.size()) throw Error("key/token count mismatch", "invalid_argument");
  if (!(params.k1 >= 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
    throw Error("BM25 requires k1 >= 0 and 0 <= b <= 1", "invalid_config");
  }
  Bm25Index index;
  index.params_ = params;
  index.keys_ = std::move(keys);
  std::size_t total = 0;
  for (std::size_t d = 0; d < index.keys_.size(); ++d) {
    if (!index.key_index_.emplace(index.keys_[d], d).second) {
      throw Error("duplicate chunk key '" + index.keys_[d] + "'", "invalid_argument");
    }
    std::map<std::string, std::size_t> tf;
    for (const auto& token : tokens[d]) ++tf[token];
    for (const auto& [term, count] : tf) index.postings_[term].push_back({d, count});
    index.lengths_.push_back(tokens[d].size());
    total += tokens[d].size();
  }
  index.avg_len_ = index.keys_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(index.keys_.size());
  return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  const auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(keys_.size());
  const double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::term_weight(double idf, std::size_t tf, std::size_t len) const {
  const double f = static_cast<double>(tf);
  const double norm = avg_len_ > 0.0 ? static_cast<double>(len) / avg_len_ : 0.0;
  return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
}

std::size_t Bm25Index::doc_index(const std::string& key) const {
  const auto it = key_index_.find(key);
  if (it == key_index_.end()) throw Error("unknown chunk key '" + key + "'", "unknown_key");
  return it->second;
}

double Bm25Index::score(const std::vector<std::string>& query_terms, const std::string& key) const {
  const std::size_t d = doc_index(key);
  double total = 0.0;
  for (const auto& term : query_terms) {
    const auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    const auto hit = std::lower_bound(list.begin(), list.end(), d,
                                      [](const Posting& p, std::size_t doc) { return p.doc < doc; });
    if (hit == list.end() || hit->doc != d) continue;
    total += term_weight(idf(term), hit->tf, lengths_[d]);
  }
  return total;
}

std::vector<ScoredKey> Bm25Index::top_k(const std::vector<std::string>& query_terms, std::size_t k) const {
  if (k == 0) throw Error("k must be at least 1", "invalid_argument");
  std::vector<double> scores(keys_.size(), 0.0);
  for (const auto& term : query_terms) {
    const auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double term_idf = idf(term);
    for (const Posting& p : it->second) scores[p.doc] += term_weight(term_idf, p.tf, lengths_[p.doc]);
  }
  std::vector<ScoredKey> ranked;
  for (std::size_t d = 0; d < keys_.size(); ++d) {
    if (scores[d] > 0.0) ranked.push_back({keys_[d], scores[d]});
  }
  sort_ranked(ranked);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

std::vector<ScoredKey> Bm25Index::top_k(std::string_view query, std::size_t k) const {
  return top_k(text::tokenize(query), k);
}

json Bm25Index::header() const {
  return {{"k1", params_.k1},
          {"b", params_.b},
          {"chunk_count", keys_.size()},
          {"term_count", postings_.size()},
          {"average_length", avg_len_}};
}

void Bm25Index::save(const std::filesystem::path& dir) const {
  io::write_file(dir / kBm25Header, header().dump(2) + "\n");
  std::vector<json> docs;
  for (std::size_t d = 0; d < keys_.size(); ++d) docs.push_back({{"key", keys_[d]}, {"length", lengths_[d]}});
  io::write_file(dir / kBm25Docs, io::to_jsonl(docs));
  std::vector<json> postings;
  for (const auto& [term, list] : postings_) {
    json entries = json::array();
    for (const auto& p : list) entries.push_back(json::array({keys_[p.doc], p.tf}));
    postings.push_back({{"term", term}, {"postings", entries}});
  }
  io::write_file(dir / kBm25Postings, io::to_jsonl(postings));
}

Bm25Index Bm25Index::load(const std::filesystem::path& dir) {
  const json header = json::parse(io::read_file(require_file(dir, kBm25Header)));
  Bm25Index index;
  index.params_ = {header.at("k1").get<double>(), header.at("b").get<double>()};
  std::size_t total = 0;
  io::for_each_jsonl(require_file(dir, kBm25Docs), [&](const json& record, std::size_t) {
    const auto key = record.at("key").get<std::string>();
    index.key_index_.emplace(key, index.keys_.size());
    index.keys_.push_back(key);
    index.lengths_.push_back(record.at("length").get<std::size_t>());
    total += index.lengths_.back();
  });
  io::for_each_jsonl(require_file(dir, kBm25Postings), [&](const json& record, std::size_t line) {
    auto& list = index.postings_[record.at("term").get<std::string>()];
    for (const auto& entry : record.at("postings")) {
      const auto key = entry.at(0).get<std::string>();
      const auto it = index.key_index_.find(key);
      if (it == index.key_index_.end()) {
        throw Error("posting for unknown key '" + key + "' at line " + std::to_string(line), "corrupt_index");
      }
      list.push_back({it->second, entry.at(1).get<std::size_t>()});
    }
  });
  if (index.keys_.size() != header.at("chunk_count").get<std::size_t>()) {
    throw Error("BM25 chunk count does not match its header", "corrupt_index");
  }
  index.avg_len_ = index.keys_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(index.keys_.size());
  return index;
}

// ---------------------------------------------------------------------------
// Dense

DenseIndex DenseIndex::build(const std::map<std::string, EmbeddingVector>& vectors) {
  DenseIndex index;
  for (const auto& [key, vec] : vectors) {
    if (index.keys_.empty()) index.dim_ = vec.dim();
    if (vec.dim() != index.dim_ || vec.dim() == 0) {
      throw Error("dense index vectors must share one positive dimension", "dim_mismatch");
    }
    const double sq = kernels::squared_norm(vec.span());
    if (!std::isfinite(sq) || sq == 0.0) throw Error("dense vector for '" + key + "' is zero or non-finite", "invalid_vector");
    index.keys_.push_back(key);
    index.rows_.insert(index.rows_.end(), vec.values.begin(), vec.values.end());
    index.norms_.push_back(std::sqrt(sq));
  }
  return index;
}

EmbeddingVector DenseIndex::vector(std::size_t row) const {
  const auto begin = rows_.begin() + static_cast<std::ptrdiff_t>(row * dim_);
  return EmbeddingVector{std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(dim_))};
}

std::vector<ScoredKey> DenseIndex::top_k(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw Error("k must be at least 1", "invalid_argument");
  if (keys_.empty()) return {};
  if (query.dim() != dim_) {
    throw Error("query dimension " + std::to_string(query.dim()) + " does not match index dimension " +
                    std::to_string(dim_), "dim_mismatch");
  }
  const double qnorm = std::sqrt(kernels::squared_norm(query.span()));
  if (!(qnorm > 0.0) || !std::isfinite(qnorm)) throw Error("query vector is zero or non-finite", "invalid_vector");
  std::vector<double> dots(keys_.size());
  kernels::active().dot_rows(query.values.data(), rows_.data(), keys_.size(), dim_, dots.data());
  std::vector<ScoredKey> ranked;
  ranked.reserve(keys_.size());
  for (std::size_t r = 0; r < keys_.size(); ++r) {
    ranked.push_back({keys_[r], std::clamp(dots[r] / (qnorm * norms_[r]), -1.0, 1.0)});
  }
  sort_ranked(ranked);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

json DenseIndex::header() const { return {{"dim", dim_}, {"count", keys_.size()}}; }

void DenseIndex::save(const std::filesystem::path& dir) const {
  io::write_file(dir / kDenseHeader, header().dump(2) + "\n");
  std::vector<json> records;
  for (std::size_t r = 0; r < keys_.size(); ++r) records.push_back({{"key", keys_[r]}, {"vector", vector(r).values}});
  io::write_file(dir / kDenseVectors, io::to_jsonl(records));
}

DenseIndex DenseIndex::load(const std::filesystem::path& dir) {
  const json header = json::parse(io::read_file(require_file(dir, kDenseHeader)));
  std::map<std::string, EmbeddingVector> vectors;
  io::for_each_jsonl(require_file(dir, kDenseVectors), [&](const json& record, std::size_t) {
    vectors.emplace(record.at("key").get<std::string>(),
                    EmbeddingVector{record.at("vector").get<std::vector<double>>()});
  });
  DenseIndex index = build(vectors);
  if (index.size() != header.at("count").get<std::size_t>() ||
      (index.size() > 0 && index.dim() != header.at("dim").get<std::size_t>())) {
    throw Error("dense index does not match its header", "corrupt_index");
  }
  return index;
}

// ---------------------------------------------------------------------------
// Chunks and hybrid union

std::string_view to_string(Source source) {
  switch (source) {
    case Source::dense: return "dense";
    case Source::bm25: return "bm25";
    case Source::both: return "both";
  }
  return "dense";
}

ChunkStore::ChunkStore(std::vector<DocumentChunk> chunks) {
  for (auto& chunk : chunks) {
    auto key = chunk.key();
    if (!chunks_.emplace(key, std::move(chunk)).second) throw Error("duplicate chunk key '" + key + "'", "invalid_argument");
  }
}

const DocumentChunk& ChunkStore::at(const std::string& key) const {
  const auto it = chunks_.find(key);
  if (it == chunks_.end()) throw Error("unknown chunk key '" + key + "'", "unknown_key");
  return it->second;
}

std::vector<DocumentChunk> ChunkStore::ordered() const {
  std::vector<DocumentChunk> out;
  for (const auto& [key, chunk] : chunks_) out.push_back(chunk);
  return out;
}

void ChunkStore::save(const std::filesystem::path& dir) const {
  std::vector<json> records;
  for (const auto& [key, chunk] : chunks_) records.push_back(chunker::to_json(chunk));
  io::write_file(dir / kChunks, io::to_jsonl(records));
}

ChunkStore ChunkStore::load(const std::filesystem::path& dir) {
  std::vector<DocumentChunk> chunks;
  io::for_each_jsonl(require_file(dir, kChunks),
                     [&](const json& record, std::size_t) { chunks.push_back(chunker::chunk_from_json(record)); });
  return ChunkStore(std::move(chunks));
}

RetrievedContext hybrid_retrieve(const DenseIndex& dense, const Bm25Index& bm25, const ChunkStore& chunks,
                                 std::string_view query, const EmbeddingVector& query_vec, std::size_t dense_k,
                                 std::size_t bm25_k) {
  const std::set<std::string> dense_keys(dense.keys().begin(), dense.keys().end());
  const std::set<std::string> bm25_keys(bm25.keys().begin(), bm25.keys().end());
  if (dense_keys != bm25_keys) throw Error("dense and BM25 indices cover different chunk sets", "index_mismatch");

  if (dense_k + bm25_k == 0) throw Error("dense_k + bm25_k must be at least 1", "invalid_argument");

  // A zero k switches that retriever off.
  RetrievedContext context;
  std::map<std::string, std::size_t> position;
  const auto dense_hits = dense_k > 0 ? dense.top_k(query_vec, dense_k) : std::vector<ScoredKey>{};
  const auto bm25_hits = bm25_k > 0 ? bm25.top_k(query, bm25_k) : std::vector<ScoredKey>{};
  for (const auto& hit : dense_hits) {
    position.emplace(hit.key, context.size());
    context.push_back({chunks.at(hit.key), hit.score, Source::dense});
  }
  for (const auto& hit : bm25_hits) {
    if (const auto it = position.find(hit.key); it != position.end()) {
      context[it->second].source = Source::both;
      continue;
    }
    position.emplace(hit.key, context.size());
    context.push_back({chunks.at(hit.key), hit.score, Source::bm25});
  }
  return context;
}

std::string query_text(std::string_view subject, std::string_view body) {
  std::string out(subject);
  out.push_back('\n');
  out.append(body);
  return out;
}

}  // namespace courseqa::retrieval
