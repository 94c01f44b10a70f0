#pragma once

// Pre-LN encoder-decoder transformer with tied output embeddings. Every
// example is processed on its own; PAD positions are masked as keys.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicsum/corpus/dataset.hpp"
#include "topicsum/guidance/guidance.hpp"
#include "topicsum/numerics/checkpoint.hpp"
#include "topicsum/numerics/tensor.hpp"

namespace topicsum::model {

using corpus::TokenId;
using numerics::Tensor;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 2;
  std::size_t n_decoder_layers = 2;
  std::size_t ffn_width = 256;
  std::size_t max_positions = 256;
  bool topical_attention = false;
  std::vector<std::size_t> topical_layers;  // decoder layers; empty = all
  std::vector<std::size_t> topical_heads;   // empty = all
  double init_std = 0.05;

  std::size_t d_k() const { return d_model / n_heads; }
  bool topical_at(std::size_t layer, std::size_t head) const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// One encoder/decoder example. Encoder ids are [prompt, SEP,] source.
struct ModelInput {
  std::string id;
  std::vector<TokenId> encoder_ids;
  std::vector<std::uint8_t> keep;      // 0 on PAD
  std::vector<double> guidance;        // per encoder position; empty = none
  std::vector<TokenId> decoder_input;  // BOS + summary
  std::vector<TokenId> targets;        // summary + EOS
};

// Builds the encoder input. Prompt positions and the separator get
// guidance::kOovScore; `g` may be null when no guidance is used.
ModelInput make_input(const corpus::Example& ex, const guidance::GuidanceVector* g, bool use_prompt);

struct Linear {
  Tensor w, b;
};
struct Norm {
  Tensor gain, bias;
};
struct AttentionWeights {
  Linear q, k, v, o;
};
struct FeedForward {
  Linear up, down;
};
struct EncoderLayer {
  Norm ln1, ln2;
  AttentionWeights self;
  FeedForward ffn;
};
struct DecoderLayer {
  Norm ln1, ln2, ln3;
  AttentionWeights self, cross;
  FeedForward ffn;
};

struct ModelWeights {
  Tensor token_embedding;  // |V| x d, also the output projection
  std::vector<EncoderLayer> encoder;
  Norm encoder_norm;
  std::vector<DecoderLayer> decoder;
  Norm decoder_norm;

  std::vector<numerics::NamedTensor> named() const;
};

struct ForwardResult {
  Tensor logits;  // decoder length x |V|
  Tensor loss;    // mean cross-entropy over non-PAD targets
  std::size_t tokens = 0;
};

// Per-layer cache for step-wise decoding.
struct DecodeCache {
  std::vector<Tensor> self_k, self_v;
  std::size_t length = 0;
};

class Transformer {
 public:
  Transformer(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ModelWeights& weights() { return w_; }
  const ModelWeights& weights() const { return w_; }
  std::vector<Tensor> parameters() const;

  // Encoder states, one row per position. Throws std::invalid_argument naming
  // max_positions when the input is too long.
  Tensor encode(std::span<const TokenId> ids, std::span<const std::uint8_t> keep) const;

  // Decoder logits for teacher-forced inputs given encoder memory.
  Tensor decode(const Tensor& memory, std::span<const std::uint8_t> keep, const Tensor* guidance,
                std::span<const TokenId> decoder_input) const;

  ForwardResult forward(const ModelInput& in) const;
  // Mean over all non-PAD target tokens of the batch.
  Tensor batch_loss(std::span<const ModelInput> batch) const;

  // Step-wise decoding with cached keys and values (no gradient recording).
  class Stepper {
   public:
    Stepper(const Transformer& model, const ModelInput& in);
    DecodeCache start() const;
    // Feeds `token` at the next position; returns log-probabilities of the
    // token after it.
    std::vector<double> step(DecodeCache& cache, TokenId token) const;

   private:
    const Transformer* model_;
    std::vector<std::uint8_t> keep_;
    std::optional<Tensor> guidance_;
    std::vector<Tensor> cross_k_, cross_v_;
  };

  void save(const std::filesystem::path& path, const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  // Validates every tensor shape against the stored config.
  static Transformer load(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

 private:
  Tensor embed(std::span<const TokenId> ids, std::size_t offset) const;
  Tensor attend(const AttentionWeights& a, const Tensor& xq, const Tensor& xkv, std::span<const std::uint8_t> keep,
                const Tensor* guidance, std::size_t decoder_layer) const;
  std::optional<Tensor> guidance_row(const ModelInput& in) const;

  ModelConfig cfg_;
  std::uint64_t seed_;
  ModelWeights w_;
  std::vector<double> positions_;  // max_positions x d sinusoidal table
};

struct TrainConfig {
  std::size_t epochs = 5;
  double lr = 1e-3;
  std::size_t batch_size = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> checkpoint_dir;  // writes epoch-<n>.ckpt
  bool restore_best = false;  // keep the weights of the lowest validation loss

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_loss;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
};

// Mean loss over a set without recording gradients.
double evaluate_loss(const Transformer& model, std::span<const ModelInput> set);

// Adam on teacher-forced loss with seeded shuffling. Throws std::runtime_error
// naming the epoch, step and example ids if the loss becomes NaN or infinite.
TrainResult train_summarizer(Transformer& model, std::span<const ModelInput> train, std::span<const ModelInput> valid,
                             const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace topicsum::model
