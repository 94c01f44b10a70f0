#include <doctest.h>

#include <cmath>
#include <random>

#include "rouge_oracle.hpp"
#include "topicsum/metrics/metrics.hpp"

using namespace topicsum;
using namespace topicsum::metrics;

namespace {

std::vector<TokenId> words(Interner& in, const std::string& s) { return in.ids(s); }

std::vector<TokenId> random_seq(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet) {
  std::vector<TokenId> s(rng() % (max_len + 1));
  for (auto& t : s) t = rng() % alphabet;
  return s;
}

lda::TopicModel disjoint_model() {
  // Topic 0 owns ids 5..7, topic 1 owns 8..10.
  lda::TopicModel m;
  m.k = 2;
  m.vocab_size = 11;
  m.alpha = 0.1;
  m.eta = 0.01;
  m.word_mask.assign(11, 1);
  for (std::size_t i = 0; i < 5; ++i) m.word_mask[i] = 0;
  m.phi.assign(22, 0.0);
  for (std::size_t w = 5; w < 8; ++w) m.phi[w] = 1.0 / 3.0;
  for (std::size_t w = 8; w < 11; ++w) m.phi[11 + w] = 1.0 / 3.0;
  return m;
}

}  // namespace

TEST_CASE("rouge hand examples") {
  Interner in;
  const auto cand = words(in, "the cat sat"), ref = words(in, "the cat ran");
  const auto r1 = rouge_n(cand, ref, 1);
  CHECK(r1.precision == 2.0 / 3.0);
  CHECK(r1.recall == 2.0 / 3.0);
  CHECK(r1.f1 == 2.0 / 3.0);
  const auto r2 = rouge_n(cand, ref, 2);
  CHECK(r2.precision == 0.5);
  CHECK(r2.recall == 0.5);
  CHECK(r2.f1 == 0.5);
  const auto rl = rouge_l(cand, ref);
  CHECK(lcs_length(cand, ref) == 2);
  CHECK(rl.f1 == 2.0 / 3.0);

  const auto same = rouge(cand, cand);
  CHECK(same.rouge1.f1 == 1.0);
  CHECK(same.rouge2.f1 == 1.0);
  CHECK(same.rougeL.f1 == 1.0);

  const auto disjoint = rouge(words(in, "a b c"), words(in, "x y z"));
  CHECK(disjoint.rouge1.f1 == 0.0);
  CHECK(disjoint.rougeL.f1 == 0.0);
  CHECK(!disjoint.rouge1.degenerate);

  const auto prefix = rouge_l(words(in, "one two three four"), words(in, "one two"));
  CHECK(prefix.recall == 1.0);
  CHECK(prefix.precision == 0.5);
}

TEST_CASE("rouge edge cases") {
  const std::vector<TokenId> a = {1}, empty;
  CHECK(rouge_n(a, a, 2).degenerate);
  CHECK(rouge_n(a, a, 2).f1 == 0.0);
  CHECK(rouge_l(empty, a).degenerate);
  CHECK(rouge_l(a, empty).f1 == 0.0);
  CHECK_THROWS_AS(rouge_n(a, a, 0), std::invalid_argument);
  CHECK(f1_score(0.0, 0.0) == 0.0);
  // Clipping: repeated candidate words count at most as often as in the reference.
  const std::vector<TokenId> cand = {1, 1, 1, 1}, ref = {1, 2};
  CHECK(rouge_n(cand, ref, 1).precision == 0.25);
  CHECK(rouge_n(cand, ref, 1).recall == 0.5);
}

TEST_CASE("rouge agrees with brute-force oracles") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = random_seq(rng, 12, 5), r = random_seq(rng, 12, 5);
    for (std::size_t n : {1, 2, 3}) {
      const auto e = rouge_n(c, r, n);
      if (c.size() < n || r.size() < n) {
        CHECK(e.degenerate);
        continue;
      }
      const double ov = static_cast<double>(testing::brute_overlap(c, r, n));
      CHECK(e.precision == ov / static_cast<double>(c.size() - n + 1));
      CHECK(e.recall == ov / static_cast<double>(r.size() - n + 1));
      CHECK(e.f1 == (ov == 0.0 ? 0.0 : 2.0 * ov / static_cast<double>(c.size() + r.size() - 2 * (n - 1))));
      CHECK(e.f1 <= std::max(e.precision, e.recall) * (1.0 + 1e-15));
      CHECK(e.f1 >= 0.0);
      CHECK(e.f1 <= 1.0);
    }
    CHECK(lcs_length(c, r) == testing::brute_lcs(c, r));
    if (!c.empty() && !r.empty()) {
      const double l = static_cast<double>(testing::brute_lcs(c, r));
      const auto e = rouge_l(c, r);
      CHECK(e.precision == l / static_cast<double>(c.size()));
      CHECK(e.recall == l / static_cast<double>(r.size()));
      CHECK(e.f1 == (l == 0.0 ? 0.0 : 2.0 * l / static_cast<double>(c.size() + r.size())));
    }
  }
}

TEST_CASE("topic focus") {
  const auto m = disjoint_model();
  lda::LdaConfig cfg;
  cfg.k = 2;
  cfg.alpha = 0.1;
  const std::vector<std::vector<TokenId>> summaries = {{5, 6, 7, 5}, {8, 9, 10}, {0, 3}, {5, 9}};
  const std::vector<std::vector<corpus::TopicWeight>> targets = {{{0, 1.0}}, {{1, 1.0}}, {{0, 1.0}}, {{1, 1.0}}};
  const auto rep = topic_focus(m, summaries, targets, cfg);
  CHECK(rep.prevalence[0] >= 0.9);
  CHECK(rep.prevalence[1] >= 0.9);
  CHECK(rep.prevalence[2] == 0.5);
  CHECK(rep.empty_after_filter[2] == 1);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (double p : rep.prevalence) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
    sum += p;
  }
  CHECK(rep.mean == sum / 4.0);
  CHECK(rep.mean >= lo);
  CHECK(rep.mean <= hi);

  const std::vector<std::vector<corpus::TopicWeight>> bad = {{{2, 1.0}}};
  const std::vector<std::vector<TokenId>> one = {{5}};
  CHECK_THROWS_AS(topic_focus(m, one, bad, cfg), std::invalid_argument);
  const std::vector<std::vector<corpus::TopicWeight>> none = {{}};
  CHECK_THROWS_AS(topic_focus(m, one, none, cfg), std::invalid_argument);
}

TEST_CASE("weighted target prevalence") {
  const std::vector<double> theta = {0.2, 0.8};
  const std::vector<corpus::TopicWeight> t = {{0, 1.0}, {1, 3.0}};
  CHECK(target_prevalence(theta, t) == doctest::Approx((0.2 + 2.4) / 4.0));
}

TEST_CASE("report json and compare") {
  MetricReport a;
  a.rouge1 = 0.4;
  a.rouge2 = 0.2;
  a.rougeL = 0.3;
  a.topic_focus = 0.5;
  a.n_examples = 10;
  a.test_set_hash = 0xabcdef;
  const auto back = MetricReport::from_json(a.to_json());
  CHECK(back.to_json() == a.to_json());
  const auto same = compare_reports(a, a);
  for (const auto& [k, v] : same.at("delta").items()) CHECK(v.get<double>() == 0.0);
  MetricReport b = a;
  b.topic_focus = 0.7;
  const auto d = compare_reports(a, b);
  CHECK(d.at("delta").at("topic_focus").get<double>() == doctest::Approx(0.2));
  CHECK(d.at("topic_focus_improved").get<bool>());
  b.n_examples = 9;
  CHECK_THROWS_AS(compare_reports(a, b), std::invalid_argument);
  b = a;
  b.test_set_hash = 1;
  CHECK_THROWS_AS(compare_reports(a, b), std::invalid_argument);
}

TEST_CASE("evaluate pairs examples by id") {
  const auto m = disjoint_model();
  auto vocab = corpus::Vocabulary::build(std::vector<std::vector<std::string>>{{"p", "q", "r", "s", "t", "u"}}, 1);
  lda::LdaConfig cfg;
  cfg.k = 2;
  std::vector<corpus::TextExample> ref(2), gen(2);
  ref[0] = {"a", "src", "p q r", {{0, 1.0}}, std::nullopt};
  ref[1] = {"b", "src", "s t u", {{1, 1.0}}, std::nullopt};
  gen[0] = {"a", "", "p q r", {}, std::nullopt};
  gen[1] = {"b", "", "s t", {}, std::nullopt};
  const auto rep = evaluate(gen, ref, vocab, m, cfg);
  CHECK(rep.n_examples == 2);
  CHECK(rep.rouge1 == doctest::Approx((1.0 + f1_score(1.0, 2.0 / 3.0)) / 2.0));
  CHECK(rep.test_set_hash == corpus::dataset_hash(ref));
  gen[1].id = "c";
  CHECK_THROWS_AS(evaluate(gen, ref, vocab, m, cfg), std::invalid_argument);
  gen.pop_back();
  CHECK_THROWS_AS(evaluate(gen, ref, vocab, m, cfg), std::invalid_argument);
}
