#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "topicsum/model/transformer.hpp"
#include "topicsum/numerics/adam.hpp"

namespace topicsum::model {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be > 0");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be > 0");
}

namespace {

std::size_t target_tokens(const ModelInput& in) {
  return static_cast<std::size_t>(std::count_if(in.targets.begin(), in.targets.end(),
                                                [](TokenId t) { return t != corpus::kPad; }));
}

}  // namespace

double evaluate_loss(const Transformer& model, std::span<const ModelInput> set) {
  if (set.empty()) throw std::invalid_argument("evaluate_loss: empty set");
  numerics::NoGradGuard guard;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& in : set) {
    const auto r = model.forward(in);
    total += r.loss.item() * static_cast<double>(r.tokens);
    tokens += r.tokens;
  }
  return total / static_cast<double>(tokens);
}

TrainResult train_summarizer(Transformer& model, std::span<const ModelInput> train, std::span<const ModelInput> valid,
                             const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_summarizer: empty training set");
  if (cfg.checkpoint_dir) std::filesystem::create_directories(*cfg.checkpoint_dir);

  auto params = model.parameters();
  numerics::AdamOptions opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.clip_norm = cfg.clip_norm;
  numerics::Adam opt(params, opt_cfg);
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<ModelInput> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(train[order[i]]);
      ++step;
      opt.zero_grad();
      auto fail = [&](const std::string& what) {
        std::string ids;
        for (const auto& in : batch) ids += (ids.empty() ? "" : ",") + in.id;
        return std::runtime_error(what + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                                  " (examples " + ids + ")");
      };
      Tensor loss;
      try {
        loss = model.batch_loss(batch);
      } catch (const std::domain_error& e) {
        throw fail(std::string("non-finite activations: ") + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) throw fail("non-finite loss");
      numerics::backward(loss);
      opt.step();
      std::size_t n = 0;
      for (const auto& in : batch) n += target_tokens(in);
      sum += value * static_cast<double>(n);
      tokens += n;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = sum / static_cast<double>(tokens);
    if (!valid.empty()) m.valid_loss = evaluate_loss(model, valid);
    const double score = m.valid_loss.value_or(m.train_loss);
    if (score < best) {
      best = score;
      result.best_epoch = epoch;
      if (cfg.restore_best) {
        best_values.clear();
        for (const auto& p : params) best_values.emplace_back(p.data().begin(), p.data().end());
      }
    }
    if (cfg.checkpoint_dir) {
      model.save(*cfg.checkpoint_dir / ("epoch-" + std::to_string(epoch) + ".ckpt"),
                 {{"epoch", epoch}, {"train_seed", cfg.seed}});
    }
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (cfg.restore_best && !best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy(best_values[i].begin(), best_values[i].end(), params[i].mutable_data().begin());
    }
  }
  return result;
}

}  // namespace topicsum::model
