#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "topicsum/numerics/tensor.hpp"

namespace topicsum::numerics {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `loss_fn` against central differences
// with step `h`, perturbing the given leaf parameters in place. The error per
// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor), so
// gradients smaller than `floor` are compared in absolute terms. `max_coords`
// caps how many coordinates per parameter are probed (0 = all); probed
// coordinates are spread evenly over the parameter.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  std::span<Tensor> params, double h = 1e-5,
                                  std::size_t max_coords = 0, double floor = 1e-6);

// Convenience form for f(x) with a single input point.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

}  // namespace topicsum::numerics
