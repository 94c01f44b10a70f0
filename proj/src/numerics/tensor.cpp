#include "topicsum/numerics/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace topicsum::numerics {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  node_ = std::make_shared<Node>();
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(1, 1, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return Tensor(1, n, std::move(data), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_string(*this));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(rows(), cols(), node_->value, false); }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw std::logic_error("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn,
                   const char* op) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) {
      if (in.requires_grad()) any = true;
      if (in.node()->consumed) {
        throw std::logic_error(std::string("op '") + op + "' received a tensor from a released graph");
      }
    }
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss, bool retain_graph) {
  if (!loss.defined()) throw std::invalid_argument("backward on undefined tensor");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_string(loss));
  }
  Node* root = loss.node().get();
  if (root->consumed) {
    throw std::logic_error("backward called twice on a released graph; rebuild it or pass retain_graph");
  }
  if (!root->requires_grad) {
    throw std::logic_error("backward on a loss that does not depend on any parameter");
  }

  // Post-order DFS gives a topological order with inputs before outputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->leaf && n->backward_fn) n->backward_fn(*n);
  }

  if (!retain_graph) {
    for (Node* n : order) {
      if (n->leaf) continue;
      n->consumed = true;
      n->parents.clear();
      n->backward_fn = nullptr;
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

std::string shape_string(const Tensor& t) {
  if (!t.defined()) return "(undefined)";
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

}  // namespace topicsum::numerics
