#include "topicsum/guidance/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "topicsum/numerics/adam.hpp"
#include "topicsum/numerics/checkpoint.hpp"
#include "topicsum/numerics/ops.hpp"

namespace topicsum::guidance {

namespace ops = numerics;
using numerics::Tensor;

std::vector<double> topic_word_vector(const lda::TopicModel& model, std::span<const double> mixture) {
  if (mixture.size() != model.k) {
    throw std::invalid_argument("topic_word_vector: mixture has " + std::to_string(mixture.size()) +
                                " entries, model has K=" + std::to_string(model.k));
  }
  std::vector<double> tau(model.vocab_size, 0.0);
  for (std::size_t k = 0; k < model.k; ++k) {
    if (mixture[k] == 0.0) continue;
    const auto row = model.phi_row(k);
    for (std::size_t v = 0; v < tau.size(); ++v) tau[v] += mixture[k] * row[v];
  }
  return tau;
}

std::vector<double> controlled_mixture(std::span<const corpus::TopicWeight> targets, std::size_t k) {
  std::vector<double> m(k, 0.0);
  double total = 0.0;
  for (const auto& t : targets) {
    if (t.topic >= k) throw std::invalid_argument("controlled_mixture: topic id " + std::to_string(t.topic) + " >= K");
    if (!(t.weight >= 0.0)) throw std::invalid_argument("controlled_mixture: negative weight");
    m[t.topic] += t.weight;
    total += t.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("controlled_mixture: all target weights are zero");
  for (auto& x : m) x /= total;
  return m;
}

GuidanceVector align_to_source(std::span<const double> tau, std::span<const TokenId> source,
                               std::span<const std::uint8_t> word_mask) {
  GuidanceVector g;
  g.scores.resize(source.size());
  g.pad.assign(source.size(), 0);
  for (std::size_t t = 0; t < source.size(); ++t) {
    const TokenId id = source[t];
    if (id == corpus::kPad) {
      g.pad[t] = 1;
      g.scores[t] = 0.0;
    } else if (id < word_mask.size() && word_mask[id] && id < tau.size()) {
      g.scores[t] = tau[id];
    } else {
      g.scores[t] = kOovScore;
    }
  }
  return g;
}

std::vector<double> normalized_frequencies(std::span<const TokenId> doc, std::size_t vocab_size) {
  auto f = corpus::bow(doc, vocab_size);
  const double n = std::accumulate(f.begin(), f.end(), 0.0);
  if (n > 0.0) {
    for (auto& x : f) x /= n;
  }
  return f;
}

void FfnConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("ffn: epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("ffn: lr must be > 0");
  if (batch_size == 0) throw std::invalid_argument("ffn: batch_size must be >= 1");
}

std::vector<Tensor> FfnWeights::parameters() const {
  if (hidden == 0) return {w1, b1};
  return {w1, b1, w2, b2};
}

FfnWeights init_ffn(std::size_t vocab_size, std::size_t hidden, std::uint64_t seed) {
  if (vocab_size == 0) throw std::invalid_argument("init_ffn: empty vocabulary");
  FfnWeights w;
  w.vocab_size = vocab_size;
  w.hidden = hidden;
  w.seed = seed;
  if (hidden == 0) {
    w.w1 = Tensor::zeros(vocab_size, vocab_size, true);
    w.b1 = Tensor::zeros(1, vocab_size, true);
    return w;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(vocab_size)));
  std::vector<double> v(vocab_size * hidden);
  for (auto& x : v) x = nd(rng);
  w.w1 = Tensor(vocab_size, hidden, std::move(v), true);
  w.b1 = Tensor::zeros(1, hidden, true);
  w.w2 = Tensor::zeros(hidden, vocab_size, true);
  w.b2 = Tensor::zeros(1, vocab_size, true);
  return w;
}

Tensor ffn_logits(const FfnWeights& w, const Tensor& freq) {
  if (freq.cols() != w.vocab_size) {
    throw std::invalid_argument("ffn: input has " + std::to_string(freq.cols()) + " columns, expected " +
                                std::to_string(w.vocab_size));
  }
  Tensor h = ops::add_row(ops::matmul(freq, w.w1), w.b1);
  if (w.hidden == 0) return h;
  return ops::add_row(ops::matmul(ops::tanh(h), w.w2), w.b2);
}

std::vector<double> ffn_forward(const FfnWeights& w, std::span<const double> freq) {
  for (double x : freq) {
    if (!(x >= 0.0)) throw std::invalid_argument("ffn_forward: frequencies must be non-negative");
  }
  numerics::NoGradGuard guard;
  const auto p = ops::softmax_rows(ffn_logits(w, Tensor(1, freq.size(), std::vector<double>(freq.begin(), freq.end()))));
  return {p.data().begin(), p.data().end()};
}

namespace {

Tensor stack(std::span<const FfnPair> pairs, std::span<const std::size_t> idx, bool target, std::size_t cols) {
  std::vector<double> v;
  v.reserve(idx.size() * cols);
  for (std::size_t i : idx) {
    const auto& src = target ? pairs[i].target : pairs[i].freq;
    v.insert(v.end(), src.begin(), src.end());
  }
  return Tensor(idx.size(), cols, std::move(v));
}

double full_loss(const FfnWeights& w, std::span<const FfnPair> pairs, std::span<const std::size_t> all) {
  numerics::NoGradGuard guard;
  return ops::cross_entropy(ffn_logits(w, stack(pairs, all, false, w.vocab_size)),
                            stack(pairs, all, true, w.vocab_size))
      .item();
}

}  // namespace

FfnTrainReport train_ffn(FfnWeights& w, std::span<const FfnPair> pairs, const FfnConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train_ffn: no training pairs");
  for (const auto& p : pairs) {
    if (p.freq.size() != w.vocab_size || p.target.size() != w.vocab_size) {
      throw std::invalid_argument("train_ffn: pair size does not match the vocabulary");
    }
  }
  FfnTrainReport report;
  for (const auto& p : pairs) {
    for (double t : p.target) {
      if (t > 0.0) report.target_entropy -= t * std::log(t);
    }
  }
  report.target_entropy /= static_cast<double>(pairs.size());

  numerics::Adam opt(w.parameters(), numerics::AdamOptions{.lr = cfg.lr});
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<std::size_t> all = order;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, n);
      opt.zero_grad();
      const auto loss = ops::cross_entropy(ffn_logits(w, stack(pairs, idx, false, w.vocab_size)),
                                           stack(pairs, idx, true, w.vocab_size));
      numerics::backward(loss);
      opt.step();
    }
    const double l = full_loss(w, pairs, all);
    if (!std::isfinite(l)) throw std::runtime_error("train_ffn: loss diverged at epoch " + std::to_string(epoch + 1));
    report.epoch_loss.push_back(l);
  }
  return report;
}

void FfnWeights::save(const std::filesystem::path& path) const {
  numerics::Checkpoint ck;
  ck.kind = "ffn";
  ck.meta = {{"vocab_size", vocab_size},
             {"hidden", hidden},
             {"vocab_hash", vocab_hash},
             {"seed", seed},
             {"config_hash", config_hash}};
  ck.tensors.push_back({"w1", w1});
  ck.tensors.push_back({"b1", b1});
  if (hidden > 0) {
    ck.tensors.push_back({"w2", w2});
    ck.tensors.push_back({"b2", b2});
  }
  numerics::save_checkpoint(path, ck);
}

FfnWeights FfnWeights::load(const std::filesystem::path& path) {
  const auto ck = numerics::load_checkpoint(path, "ffn");
  FfnWeights w;
  w.vocab_size = ck.meta.at("vocab_size").get<std::size_t>();
  w.hidden = ck.meta.at("hidden").get<std::size_t>();
  w.vocab_hash = ck.meta.at("vocab_hash").get<std::uint64_t>();
  w.seed = ck.meta.at("seed").get<std::uint64_t>();
  w.config_hash = ck.meta.value("config_hash", std::uint64_t{0});
  const std::size_t out1 = w.hidden == 0 ? w.vocab_size : w.hidden;
  auto take = [&](const std::string& name, std::size_t r, std::size_t c) {
    const auto& t = ck.get(name);
    if (t.rows() != r || t.cols() != c) {
      throw std::runtime_error("ffn checkpoint: tensor '" + name + "' has shape " + numerics::shape_string(t));
    }
    return Tensor(r, c, std::vector<double>(t.data().begin(), t.data().end()), true);
  };
  w.w1 = take("w1", w.vocab_size, out1);
  w.b1 = take("b1", 1, out1);
  if (w.hidden > 0) {
    w.w2 = take("w2", w.hidden, w.vocab_size);
    w.b2 = take("b2", 1, w.vocab_size);
  }
  return w;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kNone: return "none";
    case Mode::kFfn: return "ffn";
    case Mode::kLdaTarget: return "lda-target";
    case Mode::kControlled: return "controlled";
  }
  return "none";
}

Mode parse_mode(const std::string& s) {
  if (s == "none") return Mode::kNone;
  if (s == "ffn") return Mode::kFfn;
  if (s == "lda-target") return Mode::kLdaTarget;
  if (s == "controlled") return Mode::kControlled;
  throw std::invalid_argument("unknown guidance mode '" + s + "' (expected none, ffn, lda-target or controlled)");
}

std::vector<double> tau_for_example(const corpus::Example& ex, Mode mode, const GuidanceContext& ctx) {
  if (!ctx.model) throw std::invalid_argument("guidance: no topic model");
  switch (mode) {
    case Mode::kNone:
      throw std::logic_error("guidance: mode 'none' has no guidance vector");
    case Mode::kFfn:
      if (!ctx.ffn) throw std::invalid_argument("guidance: ffn mode needs trained FFN weights");
      return ffn_forward(*ctx.ffn, normalized_frequencies(ex.source, ctx.ffn->vocab_size));
    case Mode::kLdaTarget:
      return topic_word_vector(*ctx.model, lda::fold_in(*ctx.model, ex.summary, ctx.fold_cfg).theta);
    case Mode::kControlled:
      if (!ex.has_targets()) {
        throw std::invalid_argument("guidance: controlled mode but example '" + ex.id + "' has no target_topics");
      }
      return topic_word_vector(*ctx.model, controlled_mixture(ex.target_topics, ctx.model->k));
  }
  throw std::logic_error("guidance: bad mode");
}

GuidanceVector guidance_for_example(const corpus::Example& ex, Mode mode, const GuidanceContext& ctx) {
  return align_to_source(tau_for_example(ex, mode, ctx), ex.source, ctx.model->word_mask);
}

std::vector<FfnPair> ffn_pairs(std::span<const corpus::Example> examples, const lda::TopicModel& model,
                               const lda::LdaConfig& fold_cfg) {
  std::vector<FfnPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) {
    FfnPair p;
    p.freq = normalized_frequencies(ex.source, model.vocab_size);
    p.target = topic_word_vector(model, lda::fold_in(model, ex.summary, fold_cfg).theta);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace topicsum::guidance
