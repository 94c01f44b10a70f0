#pragma once

// Single-head attention blocks. `key_keep` has one flag per key position
// (empty = all kept); masked keys get exactly zero weight.

#include <cstdint>
#include <span>
#include <vector>

#include "topicsum/numerics/tensor.hpp"

namespace topicsum::model {

using numerics::Tensor;

// softmax(Q K^T / sqrt(d_k)) with masked keys. Throws std::invalid_argument
// when every key is masked.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::span<const std::uint8_t> key_keep = {});

// Same with a full rows x keys mask (used for causal self-attention).
Tensor attention_weights_masked(const Tensor& q, const Tensor& k, std::span<const std::uint8_t> keep);

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> key_keep = {});

// B = softmax of the guidance scores over kept positions (masked -> exact 0),
// as a 1 x n row without gradient history.
Tensor guidance_distribution(std::span<const double> scores, std::span<const std::uint8_t> key_keep = {});

// 1/2 (A + B) V, with the guidance row B broadcast to every query.
Tensor mix_guidance(const Tensor& weights, const Tensor& b);
Tensor topical_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& b,
                               std::span<const std::uint8_t> key_keep = {});

}  // namespace topicsum::model
