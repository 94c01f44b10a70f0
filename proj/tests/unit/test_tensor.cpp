#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "topicsum/numerics/adam.hpp"
#include "topicsum/numerics/gradcheck.hpp"
#include "topicsum/numerics/ops.hpp"
#include "topicsum/numerics/tensor.hpp"
#include "gradcheck_cases.hpp"

using namespace topicsum::numerics;

namespace {

Tensor randn(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = true, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return Tensor(r, c, std::move(v), grad);
}

// Independent scalar-loop cross-entropy against index targets.
double naive_ce(const Tensor& logits, const std::vector<std::size_t>& t) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
    total += std::log(z) - logits(r, t[r]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TEST_CASE("softmax hand values") {
  const auto a = softmax_rows(Tensor::row({0.0, 0.0}));
  CHECK(a(0, 0) == 0.5);
  CHECK(a(0, 1) == 0.5);
  const auto b = softmax_rows(Tensor::row({std::log(2.0), 0.0}));
  CHECK(b(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(b(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto c = softmax_rows(Tensor::row({-1000.0, 0.0}));
  CHECK(c(0, 0) >= 0.0);
  CHECK(c(0, 0) < 1e-300);
  CHECK(c(0, 1) == 1.0);
}

TEST_CASE("softmax rejects NaN") {
  CHECK_THROWS_AS(softmax_rows(Tensor::row({0.0, std::numeric_limits<double>::quiet_NaN()})), std::domain_error);
}

TEST_CASE("softmax rows are distributions on random inputs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = randn(3, 7, rng, false, 30.0);
    const auto y = softmax_rows(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(y(r, c) >= 0.0);
        s += y(r, c);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy examples") {
  const auto uniform = Tensor(1, 4, {0.0, 0.0, 0.0, 0.0});
  const std::vector<std::size_t> t0 = {2};
  CHECK(cross_entropy(uniform, t0).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  const std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> logp;
  double h = 0.0;
  for (double v : p) {
    logp.push_back(std::log(v));
    h -= v * std::log(v);
  }
  CHECK(cross_entropy(Tensor(1, 4, logp), Tensor(1, 4, p)).item() == doctest::Approx(h).epsilon(1e-13));

  std::mt19937_64 rng(5);
  const auto logits = randn(3, 5, rng, false);
  const std::vector<std::size_t> t = {4, 0, 2};
  CHECK(std::abs(cross_entropy(logits, t).item() - naive_ce(logits, t)) <= 1e-12);

  CHECK_THROWS(cross_entropy(logits, Tensor(2, 5, std::vector<double>(10, 0.2))));
  CHECK_THROWS(cross_entropy(logits, std::vector<std::size_t>{1, 2}));
  CHECK_THROWS(cross_entropy(logits, std::vector<std::size_t>{1, 2, 9}));
}

TEST_CASE("cross entropy ignores ignore-index rows") {
  std::mt19937_64 rng(6);
  const auto logits = randn(3, 4, rng, false);
  const std::vector<std::size_t> t = {1, kIgnoreIndex, 3};
  std::vector<Tensor> kept_rows = {Tensor(1, 4, {logits(0, 0), logits(0, 1), logits(0, 2), logits(0, 3)}),
                                   Tensor(1, 4, {logits(2, 0), logits(2, 1), logits(2, 2), logits(2, 3)})};
  const double manual = naive_ce(concat_rows(kept_rows), {1, 3});
  CHECK(std::abs(cross_entropy(logits, t).item() - manual) <= 1e-12);
}

TEST_CASE("backward basics") {
  auto x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  auto y = Tensor::row({1.0, 2.0}, true);
  auto loss = sum(scale(Tensor::row({1.0, 1.0}), 2.0));
  loss = add(loss, scale(sum(y), 0.0));
  backward(loss);
  CHECK(y.grad()[0] == 0.0);
  CHECK(y.grad()[1] == 0.0);
}

TEST_CASE("backward twice without retain throws") {
  auto x = Tensor::scalar(2.0, true);
  auto l = mul(x, x);
  backward(l);
  CHECK_THROWS_AS(backward(l), std::logic_error);

  auto z = Tensor::scalar(2.0, true);
  auto l2 = mul(z, z);
  backward(l2, true);
  backward(l2);
  CHECK(z.grad()[0] == 8.0);
}

TEST_CASE("backward requires a scalar") {
  auto x = Tensor::row({1.0, 2.0}, true);
  CHECK_THROWS(backward(scale(x, 2.0)));
}

TEST_CASE("every primitive passes finite differences") {
  for (auto& cs : topicsum::testing::primitive_grad_cases(21)) {
    CAPTURE(cs.name);
    const auto r = finite_diff_check(cs.loss, cs.params);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("finite_diff_check on a quadratic form and non-scalar rejection") {
  std::mt19937_64 rng(2);
  const auto m = randn(4, 4, rng, false);
  const auto x = randn(1, 4, rng, true);
  const double err = finite_diff_check([&](const Tensor& v) { return sum(mul(matmul(v, m), v)); }, x);
  CHECK(err < 1e-9);
  CHECK_THROWS(finite_diff_check([&](const Tensor& v) { return scale(v, 2.0); }, x));
}

TEST_CASE("adam first step moves by about lr") {
  auto w = Tensor::scalar(1.0, true);
  Adam opt({w}, AdamOptions{.lr = 0.1});
  w.mutable_grad()[0] = 1.0;
  opt.step();
  CHECK(w.item() == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero grad leaves the parameter and decays moments") {
  auto w = Tensor::scalar(1.0, true);
  Adam opt({w}, AdamOptions{.lr = 0.1});
  w.mutable_grad()[0] = 1.0;
  opt.step();
  const double m1 = opt.first_moment(0)[0];
  const double v1 = opt.second_moment(0)[0];
  const double before = w.item();
  w.mutable_grad()[0] = 0.0;
  opt.step();
  CHECK(opt.first_moment(0)[0] == doctest::Approx(0.9 * m1));
  CHECK(opt.second_moment(0)[0] == doctest::Approx(0.999 * v1));
  // Zero gradient still moves through the first moment; a fresh optimizer does not.
  auto u = Tensor::scalar(2.0, true);
  Adam fresh({u}, AdamOptions{.lr = 0.1});
  u.mutable_grad()[0] = 0.0;
  fresh.step();
  CHECK(u.item() == 2.0);
  CHECK(before != 0.0);
}

TEST_CASE("adam without a grad buffer throws") {
  auto w = Tensor::scalar(1.0, true);
  Adam opt({w}, AdamOptions{});
  CHECK_THROWS_AS(opt.step(), std::logic_error);
}

TEST_CASE("adam trajectories are deterministic") {
  auto run = [] {
    std::mt19937_64 rng(99);
    auto w = randn(3, 3, rng);
    const auto target = randn(3, 3, rng, false);
    Adam opt({w}, AdamOptions{.lr = 0.05, .clip_norm = 1.0});
    for (int i = 0; i < 20; ++i) {
      opt.zero_grad();
      backward(mean(mul(sub(w, target), sub(w, target))));
      opt.step();
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad guard skips recording") {
  auto x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard g;
    y = mul(x, x);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}
