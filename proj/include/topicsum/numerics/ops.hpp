#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "topicsum/numerics/tensor.hpp"

namespace topicsum::numerics {

// Matrix products.
Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[m x n] + row[1 x n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);

// Row-wise softmax. `keep` is empty (all kept) or rows*cols flags; masked
// entries come out as exact zeros. Throws std::domain_error on NaN input and
// std::invalid_argument when a row has no kept entry.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> keep = {});
Tensor log_softmax_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Gathers rows of `table` for each id.
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline constexpr std::size_t kIgnoreIndex = static_cast<std::size_t>(-1);

// Mean over rows whose target != kIgnoreIndex of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
// Mean over rows of -sum_j target_j * log softmax(logits)_j. Target rows must
// be distributions (non-negative, summing to 1 within 1e-9).
Tensor cross_entropy(const Tensor& logits, const Tensor& targets);

}  // namespace topicsum::numerics
