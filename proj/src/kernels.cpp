#include "topicsum/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace topicsum::kernels {

namespace {

inline void matmul_row(const double* a_row, const double* b, double* out_row, std::size_t k,
                       std::size_t n) {
  std::fill(out_row, out_row + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
  }
}

inline void matmul_nt_row(const double* a_row, const double* b, double* out_row, std::size_t k,
                          std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    out_row[j] = acc;
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* out_row, std::size_t p,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + p];
    if (av == 0.0) continue;
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
  }
}

inline bool softmax_row(const double* in, const std::uint8_t* keep, double* out,
                        std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < cols; ++j) {
    if (keep && !keep[j]) continue;
    any = true;
    mx = std::max(mx, in[j]);
  }
  if (!any) return false;
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (keep && !keep[j]) {
      out[j] = 0.0;
      continue;
    }
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  return true;
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    matmul_nt_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    matmul_tn_row(a.data(), b.data(), out.data() + p * n, p, m, k, n);
}

bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  bool ok = true;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::uint8_t* kr = keep.empty() ? nullptr : keep.data() + i * cols;
    ok = softmax_row(in.data() + i * cols, kr, out.data() + i * cols, cols) && ok;
  }
  return ok;
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_nt_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n) {
  const auto cols = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < cols; ++p)
    matmul_tn_row(a.data(), b.data(), out.data() + p * n, static_cast<std::size_t>(p), m, k, n);
}

bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  int failures = 0;
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) reduction(+ : failures)
  for (std::ptrdiff_t i = 0; i < nrows; ++i) {
    const std::uint8_t* kr = keep.empty() ? nullptr : keep.data() + i * cols;
    if (!softmax_row(in.data() + i * cols, kr, out.data() + i * cols, cols)) ++failures;
  }
  return failures == 0;
}

}  // namespace parallel

namespace {
inline bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelThreshold && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul(a, b, out, m, k, n);
  } else {
    serial::matmul(a, b, out, m, k, n);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul_nt(a, b, out, m, k, n);
  } else {
    serial::matmul_nt(a, b, out, m, k, n);
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul_tn_acc(a, b, out, m, k, n);
  } else {
    serial::matmul_tn_acc(a, b, out, m, k, n);
  }
}

bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  if (use_parallel(rows * cols * 8)) return parallel::softmax_rows(in, keep, out, rows, cols);
  return serial::softmax_rows(in, keep, out, rows, cols);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace topicsum::kernels
