#pragma once

#include <map>
#include <string>
#include <vector>

#include "courseqa/embedding.hpp"
#include "courseqa/ingest.hpp"
#include "json.hpp"

namespace courseqa::dedup {

inline constexpr double kDefaultThreshold = 0.2;

struct ClusterAssignment {
  int cluster_id = 0;
  std::vector<std::string> member_pair_ids;  // ascending
  std::string representative;
};

// 1 - cos(a, b), clamped to [0, 2].
double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b);

// Average-linkage agglomerative clustering on cosine distance. Merging stops
// once the closest pair of clusters is farther apart than `threshold`. Ties
// merge the pair whose smallest pair_ids sort first. Clusters come back
// ordered by their smallest member; the representative is that member.
std::vector<ClusterAssignment> agglomerative_cluster(const std::map<std::string, EmbeddingVector>& vectors,
                                                     double threshold);

// Re-picks each representative as the first member by (semester, pair_id).
void choose_representatives(std::vector<ClusterAssignment>& clusters, const std::vector<ingest::QAPair>& pairs);

// Keeps each cluster's representative, in input order.
std::vector<ingest::QAPair> deduplicate(const std::vector<ingest::QAPair>& pairs,
                                        const std::vector<ClusterAssignment>& clusters);

// Question text that gets embedded: subject, newline, body.
std::string embedding_text(const ingest::QAPair& pair);

nlohmann::json cluster_report(double threshold, const std::vector<ClusterAssignment>& clusters);

}  // namespace courseqa::dedup
