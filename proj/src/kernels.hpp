#pragma once

// Register-blocked dense products used by the convolution. Row-major,
// contiguous rows; the innermost loops run over the shared extent.

#include <cstddef>

namespace protoeeg::diff::kernels {

// c[m * n_cols + n] = dot(a[m], b[n]) for a: m_rows x k, b: n_cols x k.
inline void dot_rows(const double* a, const double* b, double* c, std::size_t m_rows, std::size_t n_cols,
                     std::size_t k) {
  std::size_t m = 0;
  for (; m + 4 <= m_rows; m += 4) {
    const double* a0 = a + (m + 0) * k;
    const double* a1 = a + (m + 1) * k;
    const double* a2 = a + (m + 2) * k;
    const double* a3 = a + (m + 3) * k;
    std::size_t n = 0;
    for (; n + 2 <= n_cols; n += 2) {
      const double* b0 = b + n * k;
      const double* b1 = b + (n + 1) * k;
      double s00 = 0, s01 = 0, s10 = 0, s11 = 0, s20 = 0, s21 = 0, s30 = 0, s31 = 0;
#pragma omp simd reduction(+ : s00, s01, s10, s11, s20, s21, s30, s31)
      for (std::size_t i = 0; i < k; ++i) {
        const double x0 = b0[i], x1 = b1[i];
        s00 += a0[i] * x0;
        s01 += a0[i] * x1;
        s10 += a1[i] * x0;
        s11 += a1[i] * x1;
        s20 += a2[i] * x0;
        s21 += a2[i] * x1;
        s30 += a3[i] * x0;
        s31 += a3[i] * x1;
      }
      c[(m + 0) * n_cols + n] = s00;
      c[(m + 0) * n_cols + n + 1] = s01;
      c[(m + 1) * n_cols + n] = s10;
      c[(m + 1) * n_cols + n + 1] = s11;
      c[(m + 2) * n_cols + n] = s20;
      c[(m + 2) * n_cols + n + 1] = s21;
      c[(m + 3) * n_cols + n] = s30;
      c[(m + 3) * n_cols + n + 1] = s31;
    }
    for (; n < n_cols; ++n) {
      const double* b0 = b + n * k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t i = 0; i < k; ++i) {
        s0 += a0[i] * b0[i];
        s1 += a1[i] * b0[i];
        s2 += a2[i] * b0[i];
        s3 += a3[i] * b0[i];
      }
      c[(m + 0) * n_cols + n] = s0;
      c[(m + 1) * n_cols + n] = s1;
      c[(m + 2) * n_cols + n] = s2;
      c[(m + 3) * n_cols + n] = s3;
    }
  }
  for (; m < m_rows; ++m) {
    const double* a0 = a + m * k;
    for (std::size_t n = 0; n < n_cols; ++n) {
      const double* b0 = b + n * k;
      double s = 0;
#pragma omp simd reduction(+ : s)
      for (std::size_t i = 0; i < k; ++i) s += a0[i] * b0[i];
      c[m * n_cols + n] = s;
    }
  }
}

// c[m][:] += sum_j a[m][j] * x[j][:] for a: m_rows x j_count,
// x: j_count x width, c: m_rows x width.
inline void accumulate_rows(const double* a, const double* x, double* c, std::size_t m_rows, std::size_t j_count,
                            std::size_t width) {
  for (std::size_t m0 = 0; m0 < m_rows; m0 += 4) {
    const std::size_t mb = m_rows - m0 < 4 ? m_rows - m0 : 4;
    std::size_t j = 0;
    if (mb == 4) {
      double* c0 = c + (m0 + 0) * width;
      double* c1 = c + (m0 + 1) * width;
      double* c2 = c + (m0 + 2) * width;
      double* c3 = c + (m0 + 3) * width;
      const double* ar0 = a + (m0 + 0) * j_count;
      const double* ar1 = a + (m0 + 1) * j_count;
      const double* ar2 = a + (m0 + 2) * j_count;
      const double* ar3 = a + (m0 + 3) * j_count;
      for (; j + 4 <= j_count; j += 4) {
        const double* x0 = x + (j + 0) * width;
        const double* x1 = x + (j + 1) * width;
        const double* x2 = x + (j + 2) * width;
        const double* x3 = x + (j + 3) * width;
        const double g00 = ar0[j], g01 = ar0[j + 1], g02 = ar0[j + 2], g03 = ar0[j + 3];
        const double g10 = ar1[j], g11 = ar1[j + 1], g12 = ar1[j + 2], g13 = ar1[j + 3];
        const double g20 = ar2[j], g21 = ar2[j + 1], g22 = ar2[j + 2], g23 = ar2[j + 3];
        const double g30 = ar3[j], g31 = ar3[j + 1], g32 = ar3[j + 2], g33 = ar3[j + 3];
#pragma omp simd
        for (std::size_t i = 0; i < width; ++i) {
          const double v0 = x0[i], v1 = x1[i], v2 = x2[i], v3 = x3[i];
          c0[i] += g00 * v0 + g01 * v1 + g02 * v2 + g03 * v3;
          c1[i] += g10 * v0 + g11 * v1 + g12 * v2 + g13 * v3;
          c2[i] += g20 * v0 + g21 * v1 + g22 * v2 + g23 * v3;
          c3[i] += g30 * v0 + g31 * v1 + g32 * v2 + g33 * v3;
        }
      }
    }
    for (std::size_t m = m0; m < m0 + mb; ++m) {
      double* cm = c + m * width;
      for (std::size_t jj = j; jj < j_count; ++jj) {
        const double g = a[m * j_count + jj];
        const double* xj = x + jj * width;
#pragma omp simd
        for (std::size_t i = 0; i < width; ++i) cm[i] += g * xj[i];
      }
    }
  }
}

}  // namespace protoeeg::diff::kernels
