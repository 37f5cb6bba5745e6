#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense vector kernels behind runtime dispatch. Every variant must agree with
// the scalar reference up to floating-point reassociation.
namespace courseqa::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_norm)(const double* a, std::size_t n);
  // out[r] = <query, rows[r*dim .. r*dim+dim)>
  void (*dot_rows)(const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                   double* out);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

bool isa_supported(Isa isa);

// Selected once per process: the widest supported ISA, unless the
// COURSEQA_SIMD environment variable names another one ("scalar", "avx2", "neon").
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_norm(std::span<const double> a) {
  return active().squared_norm(a.data(), a.size());
}

}  // namespace courseqa::kernels
