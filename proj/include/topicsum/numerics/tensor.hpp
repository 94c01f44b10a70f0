#pragma once

// Rank-2 f64 tensors with a recorded tape for reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared node. Ops in ops.hpp create new
// nodes and, when gradient recording is on and some input requires a
// gradient, remember their inputs plus a closure that pushes the output
// gradient back into them. Vectors are 1 x n, scalars 1 x 1.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace topicsum::numerics {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {node_->rows, node_->cols}; }

  std::span<const double> data() const { return node_->value; }
  // Direct write access; meant for parameters and test perturbations.
  std::span<double> mutable_data() { return node_->value; }
  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Value copy without history.
  Tensor detach() const;
  Tensor& set_requires_grad(bool on);

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Runs reverse-mode accumulation from a scalar loss into every leaf that
// requires a gradient. Leaf gradients accumulate across calls until
// zero_grad(). Without retain_graph the recorded graph is released and a
// second call on the same loss throws std::logic_error.
void backward(const Tensor& loss, bool retain_graph = false);

// Builds an op result, recording inputs and the backward closure when needed.
Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn,
                   const char* op);

std::string shape_string(const Tensor& t);

}  // namespace topicsum::numerics
