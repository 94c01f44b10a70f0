#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "lda_oracle.hpp"
#include "topicsum/corpus/synth.hpp"
#include "topicsum/lda/lda.hpp"

using namespace topicsum;
using namespace topicsum::lda;
using topicsum::testing::canonical_gibbs_mean;
using topicsum::testing::exact_posterior_mean;

namespace {

// Ids 5.. are words; reserved ids are outside the LDA vocabulary.
std::vector<std::uint8_t> mask_with(std::size_t words) {
  std::vector<std::uint8_t> m(corpus::kNumReserved + words, 1);
  for (std::size_t i = 0; i < corpus::kNumReserved; ++i) m[i] = 0;
  return m;
}

constexpr TokenId A = 5, B = 6, C = 7, D = 8;

double row_sum(const TopicModel& m, std::size_t k) {
  const auto r = m.phi_row(k);
  return std::accumulate(r.begin(), r.end(), 0.0);
}

}  // namespace

TEST_CASE("config validation") {
  LdaConfig cfg;
  cfg.k = 4;
  CHECK(cfg.resolved_alpha() == 12.5);
  CHECK_NOTHROW(cfg.validate());
  cfg.iterations = cfg.burn_in;
  CHECK_THROWS(cfg.validate());
  cfg = LdaConfig{};
  cfg.eta = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = LdaConfig{};
  cfg.k = 0;
  CHECK_THROWS(cfg.validate());
  cfg = LdaConfig{};
  cfg.alpha = -1.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("single repeated word dominates both topics") {
  const std::vector<Document> docs = {{A, A, A}};
  LdaConfig cfg;
  cfg.k = 2;
  const auto m = train_gibbs(docs, mask_with(3), cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(m.phi[k * m.vocab_size + A] > 0.5);
    CHECK(std::abs(row_sum(m, k) - 1.0) < 1e-9);
  }
}

TEST_CASE("phi is zero outside the LDA vocabulary and positive inside") {
  const std::vector<Document> docs = {{A, B, corpus::kUnk, C}, {C, D}};
  LdaConfig cfg;
  cfg.k = 2;
  cfg.iterations = 200;
  cfg.burn_in = 100;
  cfg.lag = 10;
  const auto m = train_gibbs(docs, mask_with(4), cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    for (TokenId id = 0; id < m.vocab_size; ++id) {
      if (m.in_vocab(id)) {
        CHECK(m.phi[k * m.vocab_size + id] > 0.0);
      } else {
        CHECK(m.phi[k * m.vocab_size + id] == 0.0);
      }
    }
    CHECK(std::abs(row_sum(m, k) - 1.0) < 1e-9);
  }
  CHECK(m.lda_vocab_size() == 4);
  CHECK(m.sample_log_likelihoods.size() == 10);
}

TEST_CASE("training errors") {
  LdaConfig cfg;
  cfg.k = 2;
  CHECK_THROWS_AS(train_gibbs(std::vector<Document>{}, mask_with(2), cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_gibbs(std::vector<Document>{{A}, {corpus::kUnk}}, mask_with(2), cfg), std::invalid_argument);
}

TEST_CASE("same seed gives identical phi") {
  const std::vector<Document> docs = {{A, B, A, C}, {C, D, D}, {A, D}};
  LdaConfig cfg;
  cfg.k = 2;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.lag = 20;
  const auto a = train_gibbs(docs, mask_with(4), cfg);
  const auto b = train_gibbs(docs, mask_with(4), cfg);
  CHECK(a.phi == b.phi);
  CHECK(a.sample_log_likelihoods == b.sample_log_likelihoods);
}

TEST_CASE("counts are conserved at every iteration") {
  const std::vector<Document> docs = {{A, B, A, C, D}, {C, D, D}, {A, D, B, B}};
  LdaConfig cfg;
  cfg.k = 3;
  cfg.iterations = 60;
  cfg.burn_in = 10;
  cfg.lag = 5;
  std::size_t checked = 0;
  GibbsOptions opts;
  opts.on_iteration = [&](const GibbsState& s) {
    for (std::size_t d = 0; d < s.docs.size(); ++d) {
      std::int64_t total = 0;
      for (std::size_t k = 0; k < s.k; ++k) total += s.n_dk[d * s.k + k];
      CHECK(total == static_cast<std::int64_t>(s.docs[d].size()));
    }
    for (std::size_t k = 0; k < s.k; ++k) {
      std::int64_t total = 0;
      for (std::size_t w = 0; w < s.words; ++w) total += s.n_kw[k * s.words + w];
      CHECK(total == s.n_k[k]);
    }
    ++checked;
  };
  std::vector<GibbsSample> samples;
  opts.samples = &samples;
  train_gibbs(docs, mask_with(4), cfg, opts);
  CHECK(checked == 60);
  CHECK(samples.size() == 10);
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      double t = 0.0;
      for (std::size_t k = 0; k < 3; ++k) t += s.theta[d * 3 + k];
      CHECK(std::abs(t - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("disjoint documents separate into two topics") {
  const std::vector<Document> docs = {{A, B}, {C, D}};
  const auto mask = mask_with(4);
  LdaConfig cfg;
  cfg.k = 2;
  cfg.alpha = 0.1;
  cfg.eta = 0.01;
  const auto exact = exact_posterior_mean(docs, mask, 2, 0.1, 0.01);
  const double ab = exact.phi[0 * mask.size() + A] + exact.phi[0 * mask.size() + B];
  const double cd = exact.phi[1 * mask.size() + C] + exact.phi[1 * mask.size() + D];
  CHECK(ab >= 0.9);
  CHECK(cd >= 0.9);

  cfg.iterations = 20000;
  cfg.burn_in = 1000;
  cfg.lag = 1;
  std::vector<GibbsSample> samples;
  GibbsOptions opts;
  opts.samples = &samples;
  train_gibbs(docs, mask, cfg, opts);
  const auto est = canonical_gibbs_mean(samples, 2);
  CHECK(est.phi[A] + est.phi[B] >= 0.9);
  CHECK(est.phi[mask.size() + C] + est.phi[mask.size() + D] >= 0.9);
}

TEST_CASE("gibbs posterior means match exact enumeration") {
  const std::vector<std::vector<Document>> instances = {
      {{A, B, A}, {C, D, C, B}},
      {{A, A, B}, {B, C}, {C, D, D}},
  };
  for (const auto& docs : instances) {
    const auto mask = mask_with(4);
    const auto exact = exact_posterior_mean(docs, mask, 2, 0.5, 0.5);
    LdaConfig cfg;
    cfg.k = 2;
    cfg.alpha = 0.5;
    cfg.eta = 0.5;
    cfg.iterations = 20000;
    cfg.burn_in = 1000;
    cfg.lag = 1;
    std::vector<GibbsSample> samples;
    GibbsOptions opts;
    opts.samples = &samples;
    train_gibbs(docs, mask, cfg, opts);
    const auto est = canonical_gibbs_mean(samples, 2);
    for (std::size_t i = 0; i < exact.theta.size(); ++i) CHECK(std::abs(est.theta[i] - exact.theta[i]) < 0.05);
    for (std::size_t i = 0; i < exact.phi.size(); ++i) CHECK(std::abs(est.phi[i] - exact.phi[i]) < 0.05);
  }
}

TEST_CASE("fold-in concentrates on the matching topic") {
  const std::vector<Document> docs = {{A, B, A, B, A}, {C, D, C, D, D}};
  const auto mask = mask_with(4);
  LdaConfig cfg;
  cfg.k = 2;
  cfg.alpha = 0.1;
  const auto m = train_gibbs(docs, mask, cfg);
  const std::size_t topic_ab = m.phi[A] > m.phi[m.vocab_size + A] ? 0 : 1;

  const std::vector<TokenId> doc = {A, B, A, A};
  const auto exact = topicsum::testing::exact_fold_in(m, doc, 0.1);
  CHECK(exact[topic_ab] >= 0.9);
  const auto r = fold_in(m, doc, cfg);
  CHECK_FALSE(r.empty_after_filter);
  CHECK(r.theta[topic_ab] >= 0.9);
  CHECK(std::abs(r.theta[topic_ab] - exact[topic_ab]) < 0.02);
  CHECK(std::abs(r.theta[0] + r.theta[1] - 1.0) < 1e-12);

  const auto empty = fold_in(m, std::vector<TokenId>{corpus::kUnk, corpus::kEos}, cfg);
  CHECK(empty.empty_after_filter);
  CHECK(empty.theta == std::vector<double>{0.5, 0.5});
}

TEST_CASE("single-token likelihood has a closed form") {
  // One token, K = 1, W words: P(w) = 1 / W.
  const std::vector<Document> docs = {{A}};
  for (std::size_t words : {1u, 4u, 9u}) {
    LdaConfig cfg;
    cfg.k = 1;
    cfg.iterations = 20;
    cfg.burn_in = 10;
    cfg.lag = 2;
    const auto m = train_gibbs(docs, mask_with(words), cfg);
    CHECK(m.sample_log_likelihoods.size() == 5);
    CHECK(std::abs(neg_log_likelihood(m.sample_log_likelihoods) - std::log(static_cast<double>(words))) < 1e-6);
  }
}

TEST_CASE("harmonic mean estimator") {
  CHECK_THROWS(neg_log_likelihood(std::vector<double>{}));
  // Harmonic mean of exp(-1000) and exp(-1001), computed without underflow.
  const std::vector<double> lls = {-1000.0, -1001.0};
  const double want = -std::log(2.0 / (std::exp(1000.0 - 1000.0) + std::exp(1001.0 - 1000.0))) + 1000.0;
  CHECK(neg_log_likelihood(lls) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("duplicated corpus roughly doubles the estimate and stays finite") {
  corpus::SynthConfig sc;
  sc.n_docs = 10;
  sc.k_true = 3;
  sc.doc_len = 200;
  const auto c = corpus::synth_corpus(sc);
  std::vector<std::vector<std::string>> texts;
  for (std::size_t i = 0; i < c.examples.size(); i += 2) texts.push_back(corpus::tokenize(c.examples[i].source));
  const auto vocab = corpus::Vocabulary::build(texts, 1);
  const auto mask = lda_word_mask(vocab, corpus::default_stopwords());
  std::vector<Document> docs, twice;
  for (const auto& t : texts) docs.push_back(vocab.encode(t));
  twice = docs;
  twice.insert(twice.end(), docs.begin(), docs.end());

  LdaConfig cfg;
  cfg.k = 3;
  const double one = neg_log_likelihood(train_gibbs(docs, mask, cfg).sample_log_likelihoods);
  const double two = neg_log_likelihood(train_gibbs(twice, mask, cfg).sample_log_likelihoods);
  CHECK(std::isfinite(one));
  CHECK(one > 0.0);
  CHECK(two / one == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("select_k table and failures") {
  const std::vector<Document> docs = {{A, B, A, B}, {C, D, C, D}};
  LdaConfig cfg;
  cfg.iterations = 100;
  cfg.burn_in = 50;
  cfg.lag = 10;
  const std::vector<std::size_t> one = {3};
  const auto r = select_k(docs, mask_with(4), one, cfg);
  CHECK(r.best_k == 3);
  REQUIRE(r.best_model.has_value());
  CHECK(r.best_model->k == 3);

  const std::vector<std::size_t> some_bad = {0, 2};
  const auto r2 = select_k(docs, mask_with(4), some_bad, cfg);
  CHECK(r2.best_k == 2);
  CHECK_FALSE(r2.table[0].ok);
  CHECK_FALSE(r2.table[0].error.empty());

  const std::vector<std::size_t> all_bad = {0};
  CHECK_THROWS(select_k(docs, mask_with(4), all_bad, cfg));
  CHECK_THROWS(select_k(docs, mask_with(4), std::vector<std::size_t>{}, cfg));
  CHECK(default_candidate_ks() == std::vector<std::size_t>{50, 100, 150, 200, 250, 300});
}

TEST_CASE("topic model save/load roundtrip") {
  const std::vector<Document> docs = {{A, B, A}, {C, D}};
  LdaConfig cfg;
  cfg.k = 2;
  cfg.iterations = 100;
  cfg.burn_in = 50;
  cfg.lag = 10;
  auto m = train_gibbs(docs, mask_with(4), cfg);
  m.vocab_hash = 0xabcdef;
  const auto path = std::filesystem::temp_directory_path() / "topicsum_lda_test.bin";
  m.save(path);
  const auto back = TopicModel::load(path);
  CHECK(back.phi == m.phi);
  CHECK(back.n_kw == m.n_kw);
  CHECK(back.word_mask == m.word_mask);
  CHECK(back.vocab_hash == m.vocab_hash);
  CHECK(back.alpha == m.alpha);
  CHECK(back.sample_log_likelihoods == m.sample_log_likelihoods);
  std::filesystem::remove(path);
}
