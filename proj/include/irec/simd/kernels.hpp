#pragma once
// Dense dot-product kernels used by the vector index and the embedders.
//
// Every kernel has a scalar reference in irec::simd::scalar. Wider variants
// live in their own translation units, compiled with the matching target
// flags, and are selected once at runtime from the CPU feature bits.
// IREC_SIMD=scalar in the environment pins the scalar path.

#include <cstddef>
#include <span>
#include <string_view>

namespace irec::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa) noexcept;

bool isa_supported(Isa isa) noexcept;

// ISA currently backing the dispatched kernels.
Isa active_isa() noexcept;

// Pins the dispatched kernels to `isa`. Returns false (and leaves the
// selection untouched) if the CPU or the build lacks it.
bool force_isa(Isa isa) noexcept;

// Sum of a[i] * b[i]. Spans must have equal length.
double dot(std::span<const double> a, std::span<const double> b) noexcept;

inline double squared_norm(std::span<const double> a) noexcept { return dot(a, a); }

// out[r] = <matrix row r, query> for a row-major matrix with `dim` columns.
void dot_rows(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
              std::span<double> out) noexcept;

namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void dot_rows(const double* matrix, std::size_t rows, std::size_t dim, const double* query,
              double* out) noexcept;
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define IREC_SIMD_HAVE_AVX2 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void dot_rows(const double* matrix, std::size_t rows, std::size_t dim, const double* query,
              double* out) noexcept;
}  // namespace avx2
#else
#define IREC_SIMD_HAVE_AVX2 0
#endif

#if defined(__aarch64__) || defined(_M_ARM64)
#define IREC_SIMD_HAVE_NEON 1
namespace neon {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void dot_rows(const double* matrix, std::size_t rows, std::size_t dim, const double* query,
              double* out) noexcept;
}  // namespace neon
#else
#define IREC_SIMD_HAVE_NEON 0
#endif

}  // namespace irec::simd
