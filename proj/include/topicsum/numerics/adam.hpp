#pragma once

#include <cstddef>
#include <vector>

#include "topicsum/numerics/tensor.hpp"

namespace topicsum::numerics {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clip applied before the update; <= 0 disables.
  double clip_norm = 0.0;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // Applies one update. Throws std::logic_error if a parameter has no
  // gradient buffer (it never took part in a backward pass).
  void step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace topicsum::numerics
