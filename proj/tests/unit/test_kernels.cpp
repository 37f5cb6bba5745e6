#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "courseqa/kernels.hpp"

using namespace courseqa::kernels;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = gauss(rng);
  return v;
}

std::vector<const KernelTable*> supported_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
#if defined(__x86_64__) || defined(_M_X64)
  if (isa_supported(Isa::avx2)) out.push_back(&avx2_table());
#endif
#if defined(__aarch64__)
  if (isa_supported(Isa::neon)) out.push_back(&neon_table());
#endif
  return out;
}

}  // namespace

TEST(Kernels, ScalarMatchesNaiveLoop) {
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  EXPECT_EQ(scalar_table().dot(a.data(), b.data(), 3), 12.0);
  EXPECT_EQ(scalar_table().squared_norm(a.data(), 3), 14.0);
  EXPECT_EQ(scalar_table().dot(a.data(), b.data(), 0), 0.0);
}

TEST(Kernels, VariantsAgreeWithScalarReference) {
  std::mt19937_64 rng(11);
  for (const auto* table : supported_tables()) {
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 255u, 256u, 1023u}) {
      const auto a = random_vector(rng, n), b = random_vector(rng, n);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
      const double tol = 1e-13 * (scale + 1.0);
      EXPECT_NEAR(table->dot(a.data(), b.data(), n), scalar_table().dot(a.data(), b.data(), n), tol)
          << isa_name(table->isa) << " n=" << n;
      EXPECT_NEAR(table->squared_norm(a.data(), n), scalar_table().squared_norm(a.data(), n),
                  1e-13 * (scalar_table().squared_norm(a.data(), n) + 1.0));
    }
  }
}

TEST(Kernels, DotRowsAgreesAcrossVariants) {
  std::mt19937_64 rng(12);
  const std::size_t rows = 9, dim = 13;
  const auto q = random_vector(rng, dim), m = random_vector(rng, rows * dim);
  std::vector<double> want(rows);
  scalar_table().dot_rows(q.data(), m.data(), rows, dim, want.data());
  for (std::size_t r = 0; r < rows; ++r) {
    EXPECT_NEAR(want[r], scalar_table().dot(q.data(), m.data() + r * dim, dim), 1e-15);
  }
  for (const auto* table : supported_tables()) {
    std::vector<double> got(rows);
    table->dot_rows(q.data(), m.data(), rows, dim, got.data());
    for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(got[r], want[r], 1e-12) << isa_name(table->isa);
  }
}

TEST(Kernels, ActiveTableIsSupported) {
  EXPECT_TRUE(isa_supported(active().isa));
  EXPECT_TRUE(isa_supported(Isa::scalar));
}
