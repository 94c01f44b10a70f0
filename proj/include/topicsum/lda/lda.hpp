#pragma once

// Collapsed-Gibbs LDA over a vocabulary subset (the "LDA vocabulary":
// non-reserved, non-stopword ids). Topic-word matrices are stored over the
// full vocabulary id space with exact zeros outside the LDA vocabulary, so
// they can be indexed directly by token id.

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
#include "topicsum/corpus/vocabulary.hpp"

namespace topicsum::lda {

using corpus::TokenId;
using Document = std::vector<TokenId>;

struct LdaConfig {
  std::size_t k = 2;
  std::optional<double> alpha;  // document-topic prior; 50/K when unset
  double eta = 0.01;            // topic-word prior
  std::size_t iterations = 1000;
  std::size_t burn_in = 500;
  std::size_t lag = 50;
  std::uint64_t seed = 1;

  double resolved_alpha() const { return alpha ? *alpha : 50.0 / static_cast<double>(k); }
  void validate() const;
};

// 1 for ids that belong to the LDA vocabulary.
std::vector<std::uint8_t> lda_word_mask(const corpus::Vocabulary& vocab, const corpus::Stopwords& stopwords);
Document filter_document(std::span<const TokenId> doc, std::span<const std::uint8_t> mask);

struct TopicModel {
  std::size_t k = 0;
  std::size_t vocab_size = 0;  // full |V|
  double alpha = 0.0;
  double eta = 0.0;
  LdaConfig config;
  std::uint64_t vocab_hash = 0;
  std::vector<std::uint8_t> word_mask;  // |V|
  std::vector<double> phi;              // K x |V|, posterior mean P(word | topic)
  std::vector<double> n_kw;             // K x |V|, counts at the final sweep
  std::vector<double> n_k;              // K
  std::vector<double> sample_log_likelihoods;  // log P(w | z) per retained sample
  nlohmann::json extra = nlohmann::json::object();  // caller metadata, saved verbatim

  std::size_t lda_vocab_size() const;
  bool in_vocab(TokenId id) const { return id < word_mask.size() && word_mask[id] != 0; }
  std::span<const double> phi_row(std::size_t topic) const {
    return std::span<const double>(phi).subspan(topic * vocab_size, vocab_size);
  }

  void save(const std::filesystem::path& path) const;
  static TopicModel load(const std::filesystem::path& path);
};

// Snapshot passed to the per-iteration observer.
struct GibbsState {
  std::size_t iteration;
  std::size_t k;
  std::size_t words;  // LDA vocabulary size W
  const std::vector<std::vector<std::size_t>>& z;
  const std::vector<std::int64_t>& n_dk;  // D x K
  const std::vector<std::int64_t>& n_kw;  // K x W (compact word index)
  const std::vector<std::int64_t>& n_k;   // K
  const std::vector<std::vector<std::size_t>>& docs;  // compact word indices
};

// Rao-Blackwellized estimates at one retained sample.
struct GibbsSample {
  std::vector<std::vector<std::size_t>> z;
  std::vector<double> theta;  // D x K
  std::vector<double> phi;    // K x |V|
  double log_likelihood = 0.0;
};

struct GibbsOptions {
  std::function<void(const GibbsState&)> on_iteration;
  std::vector<GibbsSample>* samples = nullptr;  // receives every retained sample
};

// Trains on documents of vocabulary ids; ids outside `word_mask` are dropped.
// Throws std::invalid_argument on an empty corpus or a document that is
// empty after filtering.
TopicModel train_gibbs(std::span<const Document> docs, std::span<const std::uint8_t> word_mask,
                       const LdaConfig& cfg, const GibbsOptions& options = {});

struct FoldInResult {
  std::vector<double> theta;
  bool empty_after_filter = false;  // true -> theta is the uniform prior mean
};

// Gibbs resampling of one held-out document with the topic-word
// distributions frozen; theta is the posterior mean of (n_dk + a) / (n + K a).
FoldInResult fold_in(const TopicModel& model, std::span<const TokenId> doc, const LdaConfig& cfg);

// log P(w | z) for the collapsed topic-word part given counts over W words.
double log_p_words_given_topics(std::span<const std::int64_t> n_kw, std::span<const std::int64_t> n_k,
                                std::size_t words, double eta);

// -log of the harmonic mean of exp(sample log-likelihoods), via log-sum-exp.
double neg_log_likelihood(std::span<const double> sample_log_likelihoods);

struct SelectionEntry {
  std::size_t k = 0;
  bool ok = false;
  double neg_log_likelihood = 0.0;
  std::string error;
};

struct SelectionResult {
  std::size_t best_k = 0;
  std::vector<SelectionEntry> table;
  std::optional<TopicModel> best_model;
};

inline const std::vector<std::size_t>& default_candidate_ks() {
  static const std::vector<std::size_t> kKs = {50, 100, 150, 200, 250, 300};
  return kKs;
}

// Trains one model per candidate (in parallel when OpenMP is available; each
// candidate owns its chain and RNG) and keeps the argmin of
// neg_log_likelihood. Failed candidates are recorded and skipped; throws if
// all fail or the list is empty.
SelectionResult select_k(std::span<const Document> docs, std::span<const std::uint8_t> word_mask,
                         std::span<const std::size_t> candidates, const LdaConfig& base);

// Maps external topic labels (e.g. generator ground truth) to LDA topics by
// summing fold-in mixtures of the reference summaries carrying each label and
// taking the argmax. Entry i is the LDA topic for label i.
std::vector<std::size_t> align_topic_labels(const TopicModel& model, std::span<const corpus::Example> examples,
                                            std::size_t n_labels, const LdaConfig& fold_cfg);

}  // namespace topicsum::lda
