#include "topicsum/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace topicsum::numerics {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  Tensor out = loss_fn();
  if (out.size() != 1) {
    throw std::invalid_argument("finite_diff_check: function is not scalar-valued " + shape_string(out));
  }
  return out.item();
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  std::span<Tensor> params, double h, std::size_t max_coords,
                                  double floor) {
  for (auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw std::invalid_argument("finite_diff_check: parameters must be leaves requiring grad");
    }
    p.zero_grad();
  }
  Tensor loss = loss_fn();
  if (loss.size() != 1) {
    throw std::invalid_argument("finite_diff_check: function is not scalar-valued " + shape_string(loss));
  }
  backward(loss);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) analytic.assign(p.grad().begin(), p.grad().end());
    const std::size_t n = p.size();
    const std::size_t probes = (max_coords == 0 || max_coords >= n) ? n : max_coords;
    for (std::size_t c = 0; c < probes; ++c) {
      const std::size_t idx = probes == n ? c : (c * n) / probes;
      auto w = p.mutable_data();
      const double orig = w[idx];
      w[idx] = orig + h;
      const double fp = evaluate(loss_fn);
      w[idx] = orig - h;
      const double fm = evaluate(loss_fn);
      w[idx] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[idx] - numeric) /
                         std::max({std::abs(numeric), std::abs(analytic[idx]), floor});
      ++result.checked;
      if (err > result.max_relative_error || result.checked == 1) {
        result.max_relative_error = err;
        result.worst_param = pi;
        result.worst_index = idx;
        result.analytic = analytic[idx];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor point(x.rows(), x.cols(), std::vector<double>(x.data().begin(), x.data().end()), true);
  std::vector<Tensor> params{point};
  return finite_diff_check([&] { return f(point); }, params, h).max_relative_error;
}

}  // namespace topicsum::numerics
