#include "courseqa/kernels.hpp"

namespace courseqa::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm_scalar(const double* a, std::size_t n) { return dot_scalar(a, a, n); }

void dot_rows_scalar(const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                     double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_scalar(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, &dot_scalar, &squared_norm_scalar, &dot_rows_scalar};
  return table;
}

}  // namespace courseqa::kernels
