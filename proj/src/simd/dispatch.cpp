#include <atomic>
#include <cstdlib>
#include <string_view>

#include "irec/simd/kernels.hpp"

namespace irec::simd {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t) noexcept;
using DotRowsFn = void (*)(const double*, std::size_t, std::size_t, const double*,
                           double*) noexcept;

struct KernelTable {
  Isa isa;
  DotFn dot;
  DotRowsFn dot_rows;
};

constexpr KernelTable kScalar{Isa::Scalar, &scalar::dot, &scalar::dot_rows};
#if IREC_SIMD_HAVE_AVX2
constexpr KernelTable kAvx2{Isa::Avx2, &avx2::dot, &avx2::dot_rows};
#endif
#if IREC_SIMD_HAVE_NEON
constexpr KernelTable kNeon{Isa::Neon, &neon::dot, &neon::dot_rows};
#endif

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return &kScalar;
#if IREC_SIMD_HAVE_AVX2
    case Isa::Avx2: return &kAvx2;
#endif
#if IREC_SIMD_HAVE_NEON
    case Isa::Neon: return &kNeon;
#endif
    default: return nullptr;
  }
}

const KernelTable* detect() noexcept {
  if (const char* env = std::getenv("IREC_SIMD"); env && std::string_view(env) == "scalar") {
    return &kScalar;
  }
  if (isa_supported(Isa::Avx2)) return table_for(Isa::Avx2);
  if (isa_supported(Isa::Neon)) return table_for(Isa::Neon);
  return &kScalar;
}

std::atomic<const KernelTable*>& active() noexcept {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if IREC_SIMD_HAVE_AVX2 && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon: return IREC_SIMD_HAVE_NEON != 0;
  }
  return false;
}

Isa active_isa() noexcept { return active().load(std::memory_order_acquire)->isa; }

bool force_isa(Isa isa) noexcept {
  if (!isa_supported(isa)) return false;
  const KernelTable* table = table_for(isa);
  if (!table) return false;
  active().store(table, std::memory_order_release);
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return active().load(std::memory_order_acquire)->dot(a.data(), b.data(), a.size());
}

void dot_rows(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
              std::span<double> out) noexcept {
  if (dim == 0) return;
  const std::size_t rows = matrix.size() / dim;
  active().load(std::memory_order_acquire)->dot_rows(matrix.data(), rows, dim, query.data(),
                                                     out.data());
}

}  // namespace irec::simd
