#pragma once

// Token-level ROUGE (no stemming, no stopword removal) and topic focus.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "topicsum/corpus/dataset.hpp"
#include "topicsum/lda/lda.hpp"

namespace topicsum::metrics {

using corpus::TokenId;

struct RougeEntry {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // an input was too short; all fields are 0
};

struct RougeScore {
  RougeEntry rouge1, rouge2, rougeL;
};

double f1_score(double precision, double recall);

// Clipped n-gram overlap. Throws std::invalid_argument when n == 0.
RougeEntry rouge_n(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t n);
std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);
RougeEntry rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference);
RougeScore rouge(std::span<const TokenId> candidate, std::span<const TokenId> reference);

struct TopicFocusReport {
  std::vector<double> prevalence;
  std::vector<std::uint8_t> empty_after_filter;  // prevalence fell back to 1/K
  double mean = 0.0;
};

// Weighted share of the target topics in the fold-in mixture of a summary:
// sum_i w_i theta[t_i] / sum_i w_i.
double target_prevalence(std::span<const double> theta, std::span<const corpus::TopicWeight> targets);

// Throws std::invalid_argument when the inputs differ in length, a summary
// has no target or a target id is out of range.
TopicFocusReport topic_focus(const lda::TopicModel& model, std::span<const std::vector<TokenId>> summaries,
                             std::span<const std::vector<corpus::TopicWeight>> targets, const lda::LdaConfig& fold_cfg);

// Maps whitespace tokens to ids for text-level ROUGE; unseen strings get
// fresh ids, so two texts mapped through one Interner compare by string.
class Interner {
 public:
  std::vector<TokenId> ids(const std::string& text);

 private:
  std::unordered_map<std::string, TokenId> map_;
};

struct MetricReport {
  double rouge1 = 0.0;  // mean F1
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double topic_focus = 0.0;
  std::size_t n_examples = 0;
  std::uint64_t test_set_hash = 0;
  std::size_t degenerate_rouge = 0;
  std::size_t empty_topic_summaries = 0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// Pairs generated and reference examples by position; ids must agree.
// Reference target topics are translated through `label_map` (empty =
// identity) into model topic ids. Throws std::invalid_argument on count or id
// mismatch.
MetricReport evaluate(std::span<const corpus::TextExample> generated, std::span<const corpus::TextExample> reference,
                      const corpus::Vocabulary& vocab, const lda::TopicModel& model, const lda::LdaConfig& fold_cfg,
                      std::span<const std::size_t> label_map = {});

// Per-metric B - A. Throws std::invalid_argument when the reports come from
// different test sets or example counts.
nlohmann::json compare_reports(const MetricReport& a, const MetricReport& b);

}  // namespace topicsum::metrics
