#include "topicsum/metrics/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "topicsum/hash.hpp"

namespace topicsum::metrics {

double f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::map<std::vector<TokenId>, std::size_t> ngram_counts(std::span<const TokenId> seq, std::size_t n) {
  std::map<std::vector<TokenId>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<TokenId>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

RougeEntry entry(double overlap, double cand_total, double ref_total) {
  RougeEntry e;
  e.precision = overlap / cand_total;
  e.recall = overlap / ref_total;
  // 2PR / (P + R) in count form: one rounding, so hand values come out exact.
  e.f1 = overlap == 0.0 ? 0.0 : 2.0 * overlap / (cand_total + ref_total);
  return e;
}

}  // namespace

RougeEntry rouge_n(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
  if (candidate.size() < n || reference.size() < n) return {0.0, 0.0, 0.0, true};
  const auto c = ngram_counts(candidate, n);
  const auto r = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : c) {
    const auto it = r.find(gram);
    if (it != r.end()) overlap += std::min(count, it->second);
  }
  return entry(static_cast<double>(overlap), static_cast<double>(candidate.size() - n + 1),
               static_cast<double>(reference.size() - n + 1));
}

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeEntry rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  if (candidate.empty() || reference.empty()) return {0.0, 0.0, 0.0, true};
  return entry(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
               static_cast<double>(reference.size()));
}

RougeScore rouge(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference)};
}

double target_prevalence(std::span<const double> theta, std::span<const corpus::TopicWeight> targets) {
  if (targets.empty()) throw std::invalid_argument("topic focus: example has no target topic");
  double num = 0.0, den = 0.0;
  for (const auto& t : targets) {
    if (t.topic >= theta.size()) {
      throw std::invalid_argument("topic focus: target topic " + std::to_string(t.topic) + " >= K " +
                                  std::to_string(theta.size()));
    }
    num += t.weight * theta[t.topic];
    den += t.weight;
  }
  if (!(den > 0.0)) throw std::invalid_argument("topic focus: target weights sum to zero");
  return num / den;
}

TopicFocusReport topic_focus(const lda::TopicModel& model, std::span<const std::vector<TokenId>> summaries,
                             std::span<const std::vector<corpus::TopicWeight>> targets, const lda::LdaConfig& fold_cfg) {
  if (summaries.size() != targets.size()) {
    throw std::invalid_argument("topic focus: " + std::to_string(summaries.size()) + " summaries but " +
                                std::to_string(targets.size()) + " target lists");
  }
  // Validate up front: exceptions must not escape the parallel loop.
  const std::vector<double> probe(model.k, 1.0 / static_cast<double>(model.k));
  for (const auto& t : targets) target_prevalence(probe, t);
  TopicFocusReport rep;
  rep.prevalence.resize(summaries.size());
  rep.empty_after_filter.resize(summaries.size());
  // Per-example fold-in is independent and seeded from the example itself.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto f = lda::fold_in(model, summaries[i], fold_cfg);
    rep.empty_after_filter[i] = f.empty_after_filter ? 1 : 0;
    rep.prevalence[i] = target_prevalence(f.theta, targets[i]);
  }
  double sum = 0.0;
  for (double p : rep.prevalence) sum += p;
  rep.mean = summaries.empty() ? 0.0 : sum / static_cast<double>(summaries.size());
  return rep;
}

std::vector<TokenId> Interner::ids(const std::string& text) {
  std::vector<TokenId> out;
  for (const auto& tok : corpus::tokenize(text)) out.push_back(map_.try_emplace(tok, map_.size()).first->second);
  return out;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"rouge1", rouge1},
                      {"rouge2", rouge2},
                      {"rougeL", rougeL},
                      {"topic_focus", topic_focus},
                      {"n_examples", n_examples},
                      {"test_set_hash", hex64(test_set_hash)},
                      {"degenerate_rouge", degenerate_rouge},
                      {"empty_topic_summaries", empty_topic_summaries}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.rouge1 = j.at("rouge1").get<double>();
  r.rouge2 = j.at("rouge2").get<double>();
  r.rougeL = j.at("rougeL").get<double>();
  r.topic_focus = j.at("topic_focus").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.test_set_hash = std::stoull(j.at("test_set_hash").get<std::string>(), nullptr, 16);
  r.degenerate_rouge = j.value("degenerate_rouge", std::size_t{0});
  r.empty_topic_summaries = j.value("empty_topic_summaries", std::size_t{0});
  for (const auto& [k, v] : j.items()) {
    if (!std::set<std::string>{"rouge1", "rouge2", "rougeL", "topic_focus", "n_examples", "test_set_hash",
                               "degenerate_rouge", "empty_topic_summaries"}
             .contains(k)) {
      r.extra[k] = v;
    }
  }
  return r;
}

MetricReport evaluate(std::span<const corpus::TextExample> generated, std::span<const corpus::TextExample> reference,
                      const corpus::Vocabulary& vocab, const lda::TopicModel& model, const lda::LdaConfig& fold_cfg,
                      std::span<const std::size_t> label_map) {
  if (generated.size() != reference.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(generated.size()) + " generated examples but " +
                                std::to_string(reference.size()) + " references");
  }
  if (reference.empty()) throw std::invalid_argument("evaluate: no examples");
  MetricReport rep;
  rep.n_examples = reference.size();
  rep.test_set_hash = corpus::dataset_hash(reference);
  std::vector<std::vector<TokenId>> summaries;
  std::vector<std::vector<corpus::TopicWeight>> targets;
  Interner interner;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (generated[i].id != reference[i].id) {
      throw std::invalid_argument("evaluate: example " + std::to_string(i) + " is '" + generated[i].id +
                                  "' in the generated file but '" + reference[i].id + "' in the reference");
    }
    const auto cand = interner.ids(generated[i].summary);
    const auto ref = interner.ids(reference[i].summary);
    const auto s = rouge(cand, ref);
    rep.rouge1 += s.rouge1.f1;
    rep.rouge2 += s.rouge2.f1;
    rep.rougeL += s.rougeL.f1;
    if (s.rouge1.degenerate || s.rouge2.degenerate || s.rougeL.degenerate) ++rep.degenerate_rouge;
    summaries.push_back(vocab.encode_text(generated[i].summary));
    auto t = reference[i].target_topics;
    for (auto& tw : t) {
      if (label_map.empty()) continue;
      if (tw.topic >= label_map.size()) {
        throw std::invalid_argument("evaluate: target label " + std::to_string(tw.topic) + " has no topic mapping");
      }
      tw.topic = label_map[tw.topic];
    }
    targets.push_back(std::move(t));
  }
  const double n = static_cast<double>(reference.size());
  rep.rouge1 /= n;
  rep.rouge2 /= n;
  rep.rougeL /= n;
  const auto focus = topic_focus(model, summaries, targets, fold_cfg);
  rep.topic_focus = focus.mean;
  rep.empty_topic_summaries =
      static_cast<std::size_t>(std::count(focus.empty_after_filter.begin(), focus.empty_after_filter.end(), 1));
  return rep;
}

nlohmann::json compare_reports(const MetricReport& a, const MetricReport& b) {
  if (a.test_set_hash != b.test_set_hash) {
    throw std::invalid_argument("compare: reports come from different test sets (" + hex64(a.test_set_hash) + " vs " +
                                hex64(b.test_set_hash) + ")");
  }
  if (a.n_examples != b.n_examples) {
    throw std::invalid_argument("compare: reports have " + std::to_string(a.n_examples) + " and " +
                                std::to_string(b.n_examples) + " examples");
  }
  nlohmann::json delta = {{"rouge1", b.rouge1 - a.rouge1},
                          {"rouge2", b.rouge2 - a.rouge2},
                          {"rougeL", b.rougeL - a.rougeL},
                          {"topic_focus", b.topic_focus - a.topic_focus}};
  return {{"n_examples", a.n_examples},
          {"test_set_hash", hex64(a.test_set_hash)},
          {"delta", delta},
          {"topic_focus_improved", b.topic_focus > a.topic_focus}};
}

}  // namespace topicsum::metrics
