#pragma once

// Brute-force LDA posteriors for tiny instances, used as test oracles.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "topicsum/lda/lda.hpp"

namespace topicsum::testing {

struct PosteriorMean {
  std::vector<double> theta;  // D x K
  std::vector<double> phi;    // K x |V|
};

// Exact posterior means of the collapsed estimates under K = 2, with the
// label symmetry broken by putting the first token in topic 0.
inline PosteriorMean exact_posterior_mean(const std::vector<lda::Document>& raw, const std::vector<std::uint8_t>& mask,
                                          std::size_t K, double alpha, double eta) {
  if (K != 2) throw std::invalid_argument("oracle supports K = 2 only");
  std::vector<lda::Document> docs;
  std::vector<std::size_t> doc_of, word_of;
  for (std::size_t d = 0; d < raw.size(); ++d) {
    docs.push_back(lda::filter_document(raw[d], mask));
    for (auto w : docs.back()) {
      doc_of.push_back(d);
      word_of.push_back(w);
    }
  }
  const std::size_t n = word_of.size(), D = docs.size(), V = mask.size();
  double W = 0.0;
  for (auto m : mask) W += m;

  std::vector<double> log_w;
  std::vector<std::vector<double>> thetas, phis;
  for (std::uint64_t cfg = 0; cfg < (std::uint64_t{1} << n); ++cfg) {
    if (cfg & 1) continue;  // first token in topic 0
    std::vector<double> n_dk(D * K, 0.0), n_kw(K * V, 0.0), n_k(K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = (cfg >> i) & 1;
      n_dk[doc_of[i] * K + k] += 1;
      n_kw[k * V + word_of[i]] += 1;
      n_k[k] += 1;
    }
    double lp = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t k = 0; k < K; ++k) lp += std::lgamma(n_dk[d * K + k] + alpha);
      lp -= std::lgamma(static_cast<double>(docs[d].size()) + K * alpha);
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t v = 0; v < V; ++v) {
        if (mask[v]) lp += std::lgamma(n_kw[k * V + v] + eta);
      }
      lp -= std::lgamma(n_k[k] + W * eta);
    }
    std::vector<double> th(D * K), ph(K * V, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t k = 0; k < K; ++k) {
        th[d * K + k] = (n_dk[d * K + k] + alpha) / (static_cast<double>(docs[d].size()) + K * alpha);
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t v = 0; v < V; ++v) {
        if (mask[v]) ph[k * V + v] = (n_kw[k * V + v] + eta) / (n_k[k] + W * eta);
      }
    }
    log_w.push_back(lp);
    thetas.push_back(std::move(th));
    phis.push_back(std::move(ph));
  }
  double mx = log_w[0];
  for (double l : log_w) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : log_w) z += std::exp(l - mx);
  PosteriorMean out{std::vector<double>(D * K, 0.0), std::vector<double>(K * V, 0.0)};
  for (std::size_t s = 0; s < log_w.size(); ++s) {
    const double p = std::exp(log_w[s] - mx) / z;
    for (std::size_t i = 0; i < out.theta.size(); ++i) out.theta[i] += p * thetas[s][i];
    for (std::size_t i = 0; i < out.phi.size(); ++i) out.phi[i] += p * phis[s][i];
  }
  return out;
}

// Averages retained Gibbs samples after relabeling each one so the first
// token sits in topic 0 (K = 2).
inline PosteriorMean canonical_gibbs_mean(const std::vector<lda::GibbsSample>& samples, std::size_t K) {
  if (K != 2 || samples.empty()) throw std::invalid_argument("canonical_gibbs_mean: K = 2 and samples required");
  const std::size_t D = samples[0].theta.size() / K, V = samples[0].phi.size() / K;
  PosteriorMean out{std::vector<double>(D * K, 0.0), std::vector<double>(K * V, 0.0)};
  for (const auto& s : samples) {
    const bool flip = s.z.at(0).at(0) == 1;
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t k = 0; k < K; ++k) out.theta[d * K + k] += s.theta[d * K + (flip ? 1 - k : k)];
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t v = 0; v < V; ++v) out.phi[k * V + v] += s.phi[(flip ? 1 - k : k) * V + v];
    }
  }
  const double n = static_cast<double>(samples.size());
  for (auto& x : out.theta) x /= n;
  for (auto& x : out.phi) x /= n;
  return out;
}

// Exact fold-in posterior mean of theta with phi frozen, by enumerating all
// K^N assignments of the document's in-vocabulary tokens.
inline std::vector<double> exact_fold_in(const lda::TopicModel& m, const std::vector<lda::TokenId>& raw, double alpha) {
  const auto doc = lda::filter_document(raw, m.word_mask);
  const std::size_t n = doc.size(), K = m.k;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= K;
  std::vector<double> theta(K, 0.0);
  double z = 0.0;
  for (std::size_t cfg = 0; cfg < total; ++cfg) {
    std::vector<double> n_k(K, 0.0);
    double w = 1.0;
    std::size_t c = cfg;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = c % K;
      c /= K;
      w *= m.phi[k * m.vocab_size + doc[i]];
      n_k[k] += 1;
    }
    for (std::size_t k = 0; k < K; ++k) w *= std::exp(std::lgamma(n_k[k] + alpha) - std::lgamma(alpha));
    z += w;
    for (std::size_t k = 0; k < K; ++k) theta[k] += w * (n_k[k] + alpha) / (static_cast<double>(n) + K * alpha);
  }
  for (auto& t : theta) t /= z;
  return theta;
}

}  // namespace topicsum::testing
