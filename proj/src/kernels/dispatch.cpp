#include <cstdlib>
#include <string>

#include "courseqa/kernels.hpp"

namespace courseqa::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable& table_for(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2) return avx2_table();
#endif
#if defined(__aarch64__)
  if (isa == Isa::neon) return neon_table();
#endif
  return scalar_table();
}

const KernelTable& select() {
  if (const char* forced = std::getenv("COURSEQA_SIMD")) {
    const std::string name(forced);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (name == isa_name(isa) && isa_supported(isa)) return table_for(isa);
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (isa_supported(isa)) return table_for(isa);
  }
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace courseqa::kernels
