#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "topicsum/corpus/dataset.hpp"
#include "topicsum/lda/lda.hpp"
#include "topicsum/numerics/tensor.hpp"

namespace topicsum::guidance {

using corpus::TokenId;

// Score given to stopwords, UNK and words outside the LDA vocabulary.
inline constexpr double kOovScore = 1e-9;

// tau = sum_i mixture_i * phi_i, over the full vocabulary.
std::vector<double> topic_word_vector(const lda::TopicModel& model, std::span<const double> mixture);

// Normalized target weights with exact zeros off-target.
std::vector<double> controlled_mixture(std::span<const corpus::TopicWeight> targets, std::size_t k);

struct GuidanceVector {
  std::vector<double> scores;       // one per source position; 0 on PAD
  std::vector<std::uint8_t> pad;    // 1 where the position is PAD

  std::size_t size() const { return scores.size(); }
};

// Position t gets tau[source[t]]; ids outside `word_mask` get kOovScore and
// PAD ids are masked.
GuidanceVector align_to_source(std::span<const double> tau, std::span<const TokenId> source,
                               std::span<const std::uint8_t> word_mask);

// L1-normalized term frequencies of the non-reserved tokens.
std::vector<double> normalized_frequencies(std::span<const TokenId> doc, std::size_t vocab_size);

struct FfnConfig {
  std::size_t hidden = 0;  // 0: single affine |V| -> |V| map
  std::size_t epochs = 15;
  double lr = 0.01;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FfnWeights {
  std::size_t vocab_size = 0;
  std::size_t hidden = 0;
  numerics::Tensor w1, b1;  // |V| x out1, 1 x out1
  numerics::Tensor w2, b2;  // hidden x |V|, 1 x |V| (hidden layer only)
  std::uint64_t vocab_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  std::vector<numerics::Tensor> parameters() const;

  void save(const std::filesystem::path& path) const;
  static FfnWeights load(const std::filesystem::path& path);
};

// Without a hidden layer the map is zero-initialized (uniform output). With
// one, the first layer is drawn from N(0, 1/|V|) and the output layer is zero.
FfnWeights init_ffn(std::size_t vocab_size, std::size_t hidden, std::uint64_t seed);

// Row-wise logits for a batch of frequency rows (n x |V|).
numerics::Tensor ffn_logits(const FfnWeights& w, const numerics::Tensor& freq);
// Softmax distribution over the vocabulary. Throws on negative input.
std::vector<double> ffn_forward(const FfnWeights& w, std::span<const double> freq);

struct FfnPair {
  std::vector<double> freq;
  std::vector<double> target;
};

struct FfnTrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy over all pairs after each epoch
  double target_entropy = 0.0;     // mean entropy of the targets (loss lower bound)
};

// Adam on mean cross-entropy -sum tau_j log tau_hat_j with seeded shuffling.
FfnTrainReport train_ffn(FfnWeights& w, std::span<const FfnPair> pairs, const FfnConfig& cfg);

enum class Mode { kNone, kFfn, kLdaTarget, kControlled };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);  // "none", "ffn", "lda-target", "controlled"

struct GuidanceContext {
  const lda::TopicModel* model = nullptr;
  const FfnWeights* ffn = nullptr;  // required for Mode::kFfn
  lda::LdaConfig fold_cfg;          // used by Mode::kLdaTarget
};

// tau over the vocabulary for `ex` under `mode`: the phi mixture of the
// target summary's fold-in, the phi mixture of the user targets, or the FFN
// prediction from the source frequencies.
std::vector<double> tau_for_example(const corpus::Example& ex, Mode mode, const GuidanceContext& ctx);

// Throws std::invalid_argument for controlled mode without target topics and
// std::logic_error for Mode::kNone.
GuidanceVector guidance_for_example(const corpus::Example& ex, Mode mode, const GuidanceContext& ctx);

// Training pairs: normalized source frequencies -> tau of the target summary.
std::vector<FfnPair> ffn_pairs(std::span<const corpus::Example> examples, const lda::TopicModel& model,
                               const lda::LdaConfig& fold_cfg);

}  // namespace topicsum::guidance
