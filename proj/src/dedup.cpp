#include "courseqa/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "courseqa/error.hpp"
#include "courseqa/kernels.hpp"

namespace courseqa {

namespace {

double checked_norm(const EmbeddingVector& v) {
  for (double x : v.values) {
    if (!std::isfinite(x)) throw Error("embedding contains a non-finite value", "invalid_vector");
  }
  const double sq = kernels::squared_norm(v.span());
  if (sq == 0.0) throw Error("cosine undefined for a zero vector", "invalid_vector");
  return std::sqrt(sq);
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error("dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()),
                "dim_mismatch");
  }
  const double na = checked_norm(a);
  const double nb = checked_norm(b);
  return std::clamp(kernels::dot(a.span(), b.span()) / (na * nb), -1.0, 1.0);
}

}  // namespace courseqa

namespace courseqa::dedup {

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  return 1.0 - cosine_similarity(a, b);
}

namespace {

// Condensed strict upper triangle of an n x n symmetric matrix.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n) : n_(n), data_(n * (n - 1) / 2) {}
  double& at(std::size_t i, std::size_t j) { return data_[index(i, j)]; }
  double at(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i + 1) / 2 + (j - i - 1);
  }
  std::size_t n_;
  std::vector<double> data_;
};

DistanceMatrix pairwise_distances(const std::vector<const EmbeddingVector*>& vectors) {
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors.front()->dim();
  // Row-major unit vectors so one dot_rows sweep fills a matrix row.
  std::vector<double> unit(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (vectors[i]->dim() != dim) throw Error("embedding dimensions differ within the corpus", "dim_mismatch");
    const double norm = checked_norm(*vectors[i]);
    for (std::size_t d = 0; d < dim; ++d) unit[i * dim + d] = vectors[i]->values[d] / norm;
  }
  DistanceMatrix dist(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t rest = n - i - 1;
    kernels::active().dot_rows(&unit[i * dim], &unit[(i + 1) * dim], rest, dim, row.data());
    for (std::size_t k = 0; k < rest; ++k) {
      dist.at(i, i + 1 + k) = vectors[i]->values == vectors[i + 1 + k]->values
                                  ? 0.0
                                  : std::clamp(1.0 - row[k], 0.0, 2.0);
    }
  }
  return dist;
}

}  // namespace

std::vector<ClusterAssignment> agglomerative_cluster(const std::map<std::string, EmbeddingVector>& vectors,
                                                     double threshold) {
  if (vectors.empty()) throw Error("cannot cluster an empty set", "empty_input");
  if (!(threshold > 0.0)) throw Error("threshold must be positive", "invalid_argument");

  std::vector<const std::string*> ids;
  std::vector<const EmbeddingVector*> vecs;
  for (const auto& [id, vec] : vectors) {
    ids.push_back(&id);
    vecs.push_back(&vec);
  }
  const std::size_t n = ids.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  // Cluster i is identified by its smallest member index, so slot order is
  // pair_id order and the lowest (i, j) wins ties.
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  std::vector<bool> alive(n, true);

  if (n > 1) {
    DistanceMatrix dist = pairwise_distances(vecs);
    // nearest[i]: closest live j > i (lowest j on ties).
    std::vector<std::size_t> nearest(n, kNone);
    std::vector<double> nearest_dist(n, kInf);
    auto refresh = [&](std::size_t i) {
      nearest[i] = kNone;
      nearest_dist[i] = kInf;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (alive[j] && dist.at(i, j) < nearest_dist[i]) {
          nearest_dist[i] = dist.at(i, j);
          nearest[i] = j;
        }
      }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    while (true) {
      std::size_t a = kNone;
      for (std::size_t i = 0; i < n; ++i) {
        if (alive[i] && nearest[i] != kNone && (a == kNone || nearest_dist[i] < nearest_dist[a])) a = i;
      }
      if (a == kNone || nearest_dist[a] > threshold) break;
      const std::size_t b = nearest[a];

      const double size_a = static_cast<double>(members[a].size());
      const double size_b = static_cast<double>(members[b].size());
      for (std::size_t k = 0; k < n; ++k) {
        if (!alive[k] || k == a || k == b) continue;
        dist.at(a, k) = (size_a * dist.at(a, k) + size_b * dist.at(b, k)) / (size_a + size_b);
      }
      members[a].insert(members[a].end(), members[b].begin(), members[b].end());
      std::sort(members[a].begin(), members[a].end());
      members[b].clear();
      alive[b] = false;

      refresh(a);
      for (std::size_t k = 0; k < a; ++k) {
        if (!alive[k]) continue;
        if (nearest[k] == a || nearest[k] == b) {
          refresh(k);
        } else if (dist.at(k, a) < nearest_dist[k] ||
                   (dist.at(k, a) == nearest_dist[k] && a < nearest[k])) {
          nearest[k] = a;
          nearest_dist[k] = dist.at(k, a);
        }
      }
      for (std::size_t k = a + 1; k < b; ++k) {
        if (alive[k] && nearest[k] == b) refresh(k);
      }
    }
  }

  std::vector<ClusterAssignment> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    ClusterAssignment cluster;
    cluster.cluster_id = static_cast<int>(clusters.size());
    for (std::size_t m : members[i]) cluster.member_pair_ids.push_back(*ids[m]);
    cluster.representative = cluster.member_pair_ids.front();
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

void choose_representatives(std::vector<ClusterAssignment>& clusters, const std::vector<ingest::QAPair>& pairs) {
  std::unordered_map<std::string_view, const ingest::QAPair*> by_id;
  for (const auto& pair : pairs) by_id.emplace(pair.pair_id, &pair);
  for (auto& cluster : clusters) {
    const ingest::QAPair* best = nullptr;
    for (const auto& id : cluster.member_pair_ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("cluster member '" + id + "' is not a known pair", "schema");
      const auto* candidate = it->second;
      if (best == nullptr || std::tie(candidate->semester, candidate->pair_id) < std::tie(best->semester, best->pair_id)) {
        best = candidate;
      }
    }
    cluster.representative = best->pair_id;
  }
}

std::vector<ingest::QAPair> deduplicate(const std::vector<ingest::QAPair>& pairs,
                                        const std::vector<ClusterAssignment>& clusters) {
  std::unordered_map<std::string_view, std::size_t> cluster_of;
  std::set<std::string_view> representatives;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& id : clusters[c].member_pair_ids) {
      if (!cluster_of.emplace(id, c).second) {
        throw Error("pair '" + id + "' appears in more than one cluster", "schema");
      }
    }
    representatives.insert(clusters[c].representative);
  }
  std::vector<ingest::QAPair> kept;
  for (const auto& pair : pairs) {
    if (!cluster_of.contains(pair.pair_id)) {
      throw Error("pair '" + pair.pair_id + "' is missing from the cluster assignment", "schema");
    }
    if (representatives.contains(pair.pair_id)) kept.push_back(pair);
  }
  return kept;
}

std::string embedding_text(const ingest::QAPair& pair) {
  return pair.question_subject + "\n" + pair.question_body;
}

nlohmann::json cluster_report(double threshold, const std::vector<ClusterAssignment>& clusters) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& cluster : clusters) {
    list.push_back({{"cluster_id", cluster.cluster_id},
                    {"members", cluster.member_pair_ids},
                    {"representative", cluster.representative}});
  }
  return {{"threshold", threshold}, {"clusters", list}};
}

}  // namespace courseqa::dedup
