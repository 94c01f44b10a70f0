#pragma once

// Dense row-major f64 kernels used by the tensor engine.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `parallel::`. The parallel versions split work over output rows only, so
// each output element is accumulated in exactly the same order as the serial
// reference and results are bit-identical. The unqualified entry points pick
// the parallel version once the problem is large enough to amortize a fork.

#include <cstddef>
#include <cstdint>
#include <span>

namespace topicsum::kernels {

namespace serial {

// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// out[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);
// out[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
// Row softmax over entries whose keep flag is non-zero; masked entries get 0.
// Returns false if some row has no kept entry.
bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace parallel

// Work (multiply-adds) above which the dispatchers use the OpenMP path.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> out,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
bool softmax_rows(std::span<const double> in, std::span<const std::uint8_t> keep,
                  std::span<double> out, std::size_t rows, std::size_t cols);

int max_threads();

}  // namespace topicsum::kernels
