#include "topicsum/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "topicsum/kernels.hpp"

namespace topicsum::numerics {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                                shape_string(b));
  }
}

// Gradient buffer of parent i, or nullptr when it does not take gradients.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.ensure_grad();
}

void check_finite_input(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (std::isnan(x)) throw std::domain_error(std::string(op) + ": NaN input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dims disagree " + shape_string(a) + " * " +
                                shape_string(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul(a.data(), b.data(), out, m, k, n);
  return make_result(m, n, std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       const Node& A = *self.parents[0];
                       const Node& B = *self.parents[1];
                       if (auto* ga = parent_grad(self, 0)) {
                         std::vector<double> tmp(m * k);
                         kernels::matmul_nt(self.grad, B.value, tmp, m, n, k);
                         for (std::size_t i = 0; i < tmp.size(); ++i) (*ga)[i] += tmp[i];
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         kernels::matmul_tn_acc(A.value, self.grad, *gb, m, k, n);
                       }
                     },
                     "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dims disagree " + shape_string(a) + " * " +
                                shape_string(b) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::matmul_nt(a.data(), b.data(), out, m, k, n);
  return make_result(m, n, std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       const Node& A = *self.parents[0];
                       const Node& B = *self.parents[1];
                       if (auto* ga = parent_grad(self, 0)) {
                         std::vector<double> tmp(m * k);
                         kernels::matmul(self.grad, B.value, tmp, m, n, k);
                         for (std::size_t i = 0; i < tmp.size(); ++i) (*ga)[i] += tmp[i];
                       }
                       if (auto* gb = parent_grad(self, 1)) {
                         kernels::matmul_tn_acc(self.grad, A.value, *gb, m, n, k);
                       }
                     },
                     "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_result(n, m, std::move(out), {a},
                     [m, n](Node& self) {
                       if (auto* g = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j * m + i];
                       }
                     },
                     "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](Node& self) {
                       for (std::size_t p = 0; p < 2; ++p) {
                         if (auto* g = parent_grad(self, p))
                           for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](Node& self) {
                       if (auto* g = parent_grad(self, 0))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                       if (auto* g = parent_grad(self, 1))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.rows(), a.cols(), std::move(out), {a, b},
                     [](Node& self) {
                       const auto& av = self.parents[0]->value;
                       const auto& bv = self.parents[1]->value;
                       if (auto* g = parent_grad(self, 0))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
                       if (auto* g = parent_grad(self, 1))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
                     },
                     "mul");
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [s](Node& self) {
                       if (auto* g = parent_grad(self, 0))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
                     },
                     "scale");
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row " + shape_string(row) + " does not broadcast over " +
                                shape_string(a));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + row.data()[j];
  return make_result(m, n, std::move(out), {a, row},
                     [m, n](Node& self) {
                       if (auto* g = parent_grad(self, 0))
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                       if (auto* g = parent_grad(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
                     },
                     "add_row");
}

Tensor gelu(const Tensor& a) {
  // tanh approximation
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  }
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& xv = self.parents[0]->value;
                       for (std::size_t i = 0; i < g->size(); ++i) {
                         const double x = xv[i];
                         const double u = kC * (x + kA * x * x * x);
                         const double t = std::tanh(u);
                         const double du = kC * (1.0 + 3.0 * kA * x * x);
                         const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                         (*g)[i] += self.grad[i] * d;
                       }
                     },
                     "gelu");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.data()[i]);
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& xv = self.parents[0]->value;
                       for (std::size_t i = 0; i < g->size(); ++i)
                         if (xv[i] > 0.0) (*g)[i] += self.grad[i];
                     },
                     "relu");
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
  return make_result(a.rows(), a.cols(), std::move(out), {a},
                     [](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < g->size(); ++i) {
                         const double y = self.value[i];
                         (*g)[i] += self.grad[i] * (1.0 - y * y);
                       }
                     },
                     "tanh");
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> keep) {
  check_finite_input(x.data(), "softmax");
  if (!keep.empty() && keep.size() != x.size()) {
    throw std::invalid_argument("softmax: mask size " + std::to_string(keep.size()) +
                                " does not match " + shape_string(x));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  if (!kernels::softmax_rows(x.data(), keep, out, m, n)) {
    throw std::invalid_argument("softmax: a row has every entry masked");
  }
  return make_result(m, n, std::move(out), {x},
                     [m, n](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* y = self.value.data() + i * n;
                         const double* gy = self.grad.data() + i * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += y[j] * (gy[j] - dot);
                       }
                     },
                     "softmax");
}

namespace {

// Per-row log-sum-exp.
std::vector<double> row_logsumexp(std::span<const double> x, std::size_t m, std::size_t n) {
  std::vector<double> lse(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data() + i * n;
    const double mx = *std::max_element(r, r + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(r[j] - mx);
    lse[i] = mx + std::log(s);
  }
  return lse;
}

}  // namespace

Tensor log_softmax_rows(const Tensor& x) {
  check_finite_input(x.data(), "log_softmax");
  const std::size_t m = x.rows(), n = x.cols();
  const auto lse = row_logsumexp(x.data(), m, n);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] - lse[i];
  return make_result(m, n, std::move(out), {x},
                     [m, n](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < n; ++j) gs += self.grad[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           (*g)[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gs;
                       }
                     },
                     "log_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(n));
  }
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (r[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return make_result(
      m, n, std::move(out), {x, gain, bias},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->value;
        if (auto* gg = parent_grad(self, 1))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += self.grad[i * n + j] * xhat[i * n + j];
        if (auto* gb = parent_grad(self, 2))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += self.grad[i * n + j];
        if (auto* gx = parent_grad(self, 0)) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = self.grad[i * n + j] * gv[j];
              s1 += d;
              s2 += d * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double d = self.grad[i * n + j] * gv[j];
              (*gx)[i * n + j] += inv_std[i] * (d - inv_n * s1 - xhat[i * n + j] * inv_n * s2);
            }
          }
        }
      },
      "layer_norm");
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t n = table.cols();
  std::vector<double> out(ids.size() * n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " >= table rows " +
                              std::to_string(table.rows()));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return make_result(ids.size(), n, std::move(out), {table},
                     [n, idv = std::move(idv)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j) (*g)[idv[i] * n + j] += self.grad[i * n + j];
                     },
                     "embedding");
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) {
    throw std::out_of_range("slice_cols: [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") exceeds " + shape_string(x));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * n + begin + j];
  return make_result(m, count, std::move(out), {x},
                     [m, n, begin, count](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           (*g)[i * n + begin + j] += self.grad[i * count + j];
                     },
                     "slice_cols");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row count mismatch");
    offsets.push_back(n);
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * n + offsets[k] + j] = parts[k].data()[i * c + j];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(m, n, std::move(out), std::move(inputs),
                     [m, n, offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto* g = parent_grad(self, k);
                         if (!g) continue;
                         const std::size_t c = self.parents[k]->cols;
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             (*g)[i * c + j] += self.grad[i * n + offsets[k] + j];
                       }
                     },
                     "concat_cols");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != n) throw std::invalid_argument("concat_rows: column count mismatch");
    offsets.push_back(m * n);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(m, n, std::move(out), std::move(inputs),
                     [offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto* g = parent_grad(self, k);
                         if (!g) continue;
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[k] + i];
                       }
                     },
                     "concat_rows");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(1, 1, {s}, {x},
                     [](Node& self) {
                       if (auto* g = parent_grad(self, 0))
                         for (auto& v : *g) v += self.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_string(logits));
  }
  check_finite_input(logits.data(), "cross_entropy");
  std::size_t count = 0;
  for (auto t : targets) {
    if (t == kIgnoreIndex) continue;
    if (t >= n) throw std::out_of_range("cross_entropy: target index " + std::to_string(t) + " >= " + std::to_string(n));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every target is ignored");
  const auto lse = row_logsumexp(logits.data(), m, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] == kIgnoreIndex) continue;
    loss += lse[i] - logits.data()[i * n + targets[i]];
  }
  loss /= static_cast<double>(count);
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return make_result(1, 1, {loss}, {logits},
                     [m, n, count, lse, tv = std::move(tv)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& x = self.parents[0]->value;
                       const double w = self.grad[0] / static_cast<double>(count);
                       for (std::size_t i = 0; i < m; ++i) {
                         if (tv[i] == kIgnoreIndex) continue;
                         for (std::size_t j = 0; j < n; ++j)
                           (*g)[i * n + j] += w * std::exp(x[i * n + j] - lse[i]);
                         (*g)[i * n + tv[i]] -= w;
                       }
                     },
                     "cross_entropy");
}

Tensor cross_entropy(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "cross_entropy");
  check_finite_input(logits.data(), "cross_entropy");
  const std::size_t m = logits.rows(), n = logits.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double t = targets.data()[i * n + j];
      if (t < 0.0) throw std::invalid_argument("cross_entropy: negative target probability");
      s += t;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument("cross_entropy: target row " + std::to_string(i) + " sums to " +
                                  std::to_string(s));
    }
  }
  const auto lse = row_logsumexp(logits.data(), m, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double t = targets.data()[i * n + j];
      if (t != 0.0) loss -= t * (logits.data()[i * n + j] - lse[i]);
    }
  loss /= static_cast<double>(m);
  return make_result(1, 1, {loss}, {logits, targets},
                     [m, n, lse](Node& self) {
                       auto* g = parent_grad(self, 0);
                       const auto& x = self.parents[0]->value;
                       const auto& t = self.parents[1]->value;
                       const double w = self.grad[0] / static_cast<double>(m);
                       if (g) {
                         for (std::size_t i = 0; i < m; ++i) {
                           double ts = 0.0;
                           for (std::size_t j = 0; j < n; ++j) ts += t[i * n + j];
                           for (std::size_t j = 0; j < n; ++j)
                             (*g)[i * n + j] += w * (ts * std::exp(x[i * n + j] - lse[i]) - t[i * n + j]);
                         }
                       }
                       if (auto* gt = parent_grad(self, 1)) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             (*gt)[i * n + j] -= w * (x[i * n + j] - lse[i]);
                       }
                     },
                     "cross_entropy_dist");
}

}  // namespace topicsum::numerics
