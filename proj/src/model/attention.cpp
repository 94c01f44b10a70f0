#include "topicsum/model/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "topicsum/numerics/ops.hpp"

namespace topicsum::model {

namespace ops = numerics;

namespace {

std::vector<std::uint8_t> expand_keys(std::span<const std::uint8_t> key_keep, std::size_t rows, std::size_t keys) {
  if (key_keep.empty()) return {};
  if (key_keep.size() != keys) {
    throw std::invalid_argument("attention: mask has " + std::to_string(key_keep.size()) + " entries for " +
                                std::to_string(keys) + " keys");
  }
  std::vector<std::uint8_t> keep(rows * keys);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < keys; ++c) keep[r * keys + c] = key_keep[c];
  }
  return keep;
}

}  // namespace

Tensor attention_weights_masked(const Tensor& q, const Tensor& k, std::span<const std::uint8_t> keep) {
  if (q.cols() != k.cols()) {
    throw std::invalid_argument("attention: query dim " + std::to_string(q.cols()) + " != key dim " +
                                std::to_string(k.cols()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), inv), keep);
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::span<const std::uint8_t> key_keep) {
  const auto keep = expand_keys(key_keep, q.rows(), k.rows());
  return attention_weights_masked(q, k, keep);
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> key_keep) {
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: keys and values differ in length");
  return ops::matmul(attention_weights(q, k, key_keep), v);
}

Tensor guidance_distribution(std::span<const double> scores, std::span<const std::uint8_t> key_keep) {
  if (!key_keep.empty() && key_keep.size() != scores.size()) {
    throw std::invalid_argument("guidance: mask length differs from guidance length");
  }
  numerics::NoGradGuard guard;
  const Tensor s(1, scores.size(), std::vector<double>(scores.begin(), scores.end()));
  return ops::softmax_rows(s, key_keep).detach();
}

Tensor mix_guidance(const Tensor& weights, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != weights.cols()) {
    throw std::invalid_argument("topical attention: guidance has " + std::to_string(b.cols()) + " positions, keys have " +
                                std::to_string(weights.cols()));
  }
  return ops::scale(ops::add_row(weights, b), 0.5);
}

Tensor topical_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& b,
                               std::span<const std::uint8_t> key_keep) {
  if (b.cols() != k.rows()) {
    throw std::invalid_argument("topical attention: guidance has " + std::to_string(b.cols()) + " positions, keys have " +
                                std::to_string(k.rows()));
  }
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: keys and values differ in length");
  return ops::matmul(mix_guidance(attention_weights(q, k, key_keep), b), v);
}

}  // namespace topicsum::model
