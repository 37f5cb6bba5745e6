#pragma once

#include <span>
#include <vector>

namespace courseqa {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  std::span<const double> span() const { return values; }
  bool operator==(const EmbeddingVector&) const = default;
};

// Throws courseqa::Error on dimension mismatch, zero vectors, or non-finite values.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace courseqa
