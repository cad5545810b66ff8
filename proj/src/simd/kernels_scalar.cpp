#include "irec/simd/kernels.hpp"

namespace irec::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot_rows(const double* matrix, std::size_t rows, std::size_t dim, const double* query,
              double* out) noexcept {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(matrix + r * dim, query, dim);
}

}  // namespace irec::simd::scalar
