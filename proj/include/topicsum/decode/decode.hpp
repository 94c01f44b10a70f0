#pragma once

// Beam search with length bounds, n-gram blocking and length-power score
// normalization.
//
// Lengths count generated tokens. EOS is forbidden while fewer than
// min_length content tokens exist; once max_length content tokens exist
// only EOS is allowed, so every finished hypothesis ends with EOS. The
// normalized score divides the cumulative log-probability by
// (content tokens + 1)^p, the +1 being the EOS.
//
// Per step every live hypothesis is expanded over its allowed tokens and the
// candidates are ranked by cumulative log-probability (ties: lexicographically
// lower token sequence). An EOS candidate ranked within the first beam_size
// joins the finished pool; the best beam_size non-EOS candidates stay live.
// The finished pool keeps the beam_size best normalized scores. With
// early_stopping the search halts as soon as the pool is full, otherwise when
// no live hypothesis is left.

#include <cstddef>
#include <memory>
#include <vector>

#include <json.hpp>

#include "topicsum/corpus/vocabulary.hpp"
#include "topicsum/model/transformer.hpp"

namespace topicsum::decode {

using corpus::TokenId;

struct DecodeConfig {
  std::size_t beam_size = 4;
  double length_penalty = 2.0;
  std::size_t max_length = 180;
  std::size_t min_length = 56;
  std::size_t no_repeat_ngram = 3;  // 0 disables
  bool early_stopping = true;

  void validate() const;
  nlohmann::json to_json() const;
  static DecodeConfig from_json(const nlohmann::json& j);
};

// logprob / length^p. Throws std::invalid_argument when length is 0.
double length_normalized_score(double logprob, std::size_t length, double p);

struct ScorerState {
  virtual ~ScorerState() = default;
};

// Next-token distribution of an autoregressive model. States are immutable
// and may be shared between hypotheses.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos() const = 0;
  // State after BOS.
  virtual std::shared_ptr<const ScorerState> initial() const = 0;
  // Log-probabilities of the next token; -inf marks a banned token.
  virtual std::vector<double> log_probs(const ScorerState& s) const = 0;
  virtual std::shared_ptr<const ScorerState> advance(const ScorerState& s, TokenId token) const = 0;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // content tokens, EOS excluded
  double logprob = 0.0;         // includes the EOS step when finished
  bool finished = false;
  bool forced_eos = false;  // every continuation was masked
  double normalized_score = 0.0;
};

// True when appending `next` to `tokens` repeats an n-gram already present.
bool creates_repeat(const std::vector<TokenId>& tokens, TokenId next, std::size_t n);

Hypothesis beam_search(const StepScorer& scorer, const DecodeConfig& cfg);
// Argmax over allowed tokens at every step (ties: lowest id), same constraints.
Hypothesis greedy_decode(const StepScorer& scorer, const DecodeConfig& cfg);

// First-order Markov model over ids [0, |V|); row |V| of the table is the
// distribution after BOS. Rows hold logits.
class MarkovScorer : public StepScorer {
 public:
  MarkovScorer(std::vector<std::vector<double>> logits, TokenId eos);
  std::size_t vocab_size() const override { return vocab_; }
  TokenId eos() const override { return eos_; }
  std::shared_ptr<const ScorerState> initial() const override;
  std::vector<double> log_probs(const ScorerState& s) const override;
  std::shared_ptr<const ScorerState> advance(const ScorerState& s, TokenId token) const override;

 private:
  std::size_t vocab_;
  TokenId eos_;
  std::vector<std::vector<double>> log_probs_;
};

// Adapter over a trained summarizer with cached decoder states. PAD, BOS and
// SEP are never generated.
class TransformerScorer : public StepScorer {
 public:
  TransformerScorer(const model::Transformer& m, const model::ModelInput& in);
  std::size_t vocab_size() const override { return model_->config().vocab_size; }
  TokenId eos() const override { return corpus::kEos; }
  std::shared_ptr<const ScorerState> initial() const override;
  std::vector<double> log_probs(const ScorerState& s) const override;
  std::shared_ptr<const ScorerState> advance(const ScorerState& s, TokenId token) const override;

 private:
  const model::Transformer* model_;
  model::Transformer::Stepper stepper_;
};

Hypothesis generate(const model::Transformer& m, const model::ModelInput& in, const DecodeConfig& cfg);

}  // namespace topicsum::decode
