#include "topicsum/lda/lda.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "topicsum/numerics/checkpoint.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace topicsum::lda {

namespace {

constexpr std::uint64_t kFoldInSalt = 0x6a09e667f3bcc909ULL;

std::size_t sample_index(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0.0) return k;
  }
  return weights.size() - 1;
}

bool is_sample_sweep(const LdaConfig& cfg, std::size_t it) {
  return it >= cfg.burn_in && (it - cfg.burn_in) % cfg.lag == 0;
}

numerics::Tensor row_tensor(std::span<const double> v) {
  return numerics::Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

}  // namespace

void LdaConfig::validate() const {
  if (k < 1) throw std::invalid_argument("lda: K must be >= 1");
  const double a = resolved_alpha();
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("lda: alpha must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("lda: eta must be > 0");
  if (lag == 0) throw std::invalid_argument("lda: lag must be >= 1");
  if (iterations <= burn_in) throw std::invalid_argument("lda: iterations must exceed burn_in");
}

std::vector<std::uint8_t> lda_word_mask(const corpus::Vocabulary& vocab, const corpus::Stopwords& stopwords) {
  std::vector<std::uint8_t> mask(vocab.size(), 0);
  for (TokenId id = corpus::kNumReserved; id < vocab.size(); ++id) {
    mask[id] = stopwords.contains(vocab.token(id)) ? 0 : 1;
  }
  return mask;
}

Document filter_document(std::span<const TokenId> doc, std::span<const std::uint8_t> mask) {
  Document out;
  for (TokenId id : doc) {
    if (id < mask.size() && mask[id]) out.push_back(id);
  }
  return out;
}

std::size_t TopicModel::lda_vocab_size() const {
  return static_cast<std::size_t>(std::count(word_mask.begin(), word_mask.end(), std::uint8_t{1}));
}

double log_p_words_given_topics(std::span<const std::int64_t> n_kw, std::span<const std::int64_t> n_k,
                                std::size_t words, double eta) {
  const std::size_t k = n_k.size();
  if (n_kw.size() != k * words) throw std::invalid_argument("log_p_words_given_topics: shape mismatch");
  const double w = static_cast<double>(words);
  const double per_topic = std::lgamma(w * eta) - w * std::lgamma(eta);
  double total = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    double s = per_topic;
    for (std::size_t v = 0; v < words; ++v) s += std::lgamma(static_cast<double>(n_kw[t * words + v]) + eta);
    s -= std::lgamma(static_cast<double>(n_k[t]) + w * eta);
    total += s;
  }
  return total;
}

double neg_log_likelihood(std::span<const double> lls) {
  if (lls.empty()) throw std::invalid_argument("neg_log_likelihood: no post-burn-in samples");
  // Harmonic mean: log(1 / mean(exp(-ll))) = -(logsumexp(-ll) - log S).
  double m = -std::numeric_limits<double>::infinity();
  for (double l : lls) m = std::max(m, -l);
  double s = 0.0;
  for (double l : lls) s += std::exp(-l - m);
  const double log_mean_inv = m + std::log(s) - std::log(static_cast<double>(lls.size()));
  return log_mean_inv;
}

TopicModel train_gibbs(std::span<const Document> raw_docs, std::span<const std::uint8_t> word_mask,
                       const LdaConfig& cfg, const GibbsOptions& options) {
  cfg.validate();
  if (raw_docs.empty()) throw std::invalid_argument("lda: empty corpus");
  const std::size_t vocab_size = word_mask.size();
  const std::size_t K = cfg.k;
  const double alpha = cfg.resolved_alpha();
  const double eta = cfg.eta;

  // Compact word index over the LDA vocabulary, in id order.
  std::vector<std::size_t> compact(vocab_size, 0);
  std::vector<TokenId> expand;
  for (TokenId id = 0; id < vocab_size; ++id) {
    if (word_mask[id]) {
      compact[id] = expand.size();
      expand.push_back(id);
    }
  }
  const std::size_t W = expand.size();
  if (W == 0) throw std::invalid_argument("lda: LDA vocabulary is empty");
  const double w_eta = static_cast<double>(W) * eta;

  std::vector<std::vector<std::size_t>> docs;
  docs.reserve(raw_docs.size());
  for (std::size_t d = 0; d < raw_docs.size(); ++d) {
    std::vector<std::size_t> doc;
    for (TokenId id : raw_docs[d]) {
      if (id < vocab_size && word_mask[id]) doc.push_back(compact[id]);
    }
    if (doc.empty()) {
      throw std::invalid_argument("lda: document " + std::to_string(d) + " is empty after stopword removal");
    }
    docs.push_back(std::move(doc));
  }
  const std::size_t D = docs.size();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> init(0, K - 1);
  std::vector<std::vector<std::size_t>> z(D);
  std::vector<std::int64_t> n_dk(D * K, 0), n_kw(K * W, 0), n_k(K, 0);
  for (std::size_t d = 0; d < D; ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const std::size_t t = init(rng);
      z[d][i] = t;
      ++n_dk[d * K + t];
      ++n_kw[t * W + docs[d][i]];
      ++n_k[t];
    }
  }

  TopicModel model;
  model.k = K;
  model.vocab_size = vocab_size;
  model.alpha = alpha;
  model.eta = eta;
  model.config = cfg;
  model.word_mask.assign(word_mask.begin(), word_mask.end());
  model.phi.assign(K * vocab_size, 0.0);

  std::vector<double> p(K);
  std::size_t n_samples = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const std::size_t w = docs[d][i];
        std::size_t t = z[d][i];
        --n_dk[d * K + t];
        --n_kw[t * W + w];
        --n_k[t];
        for (std::size_t k = 0; k < K; ++k) {
          p[k] = (static_cast<double>(n_dk[d * K + k]) + alpha) * (static_cast<double>(n_kw[k * W + w]) + eta) /
                 (static_cast<double>(n_k[k]) + w_eta);
        }
        t = sample_index(rng, p);
        z[d][i] = t;
        ++n_dk[d * K + t];
        ++n_kw[t * W + w];
        ++n_k[t];
      }
    }
    if (options.on_iteration) options.on_iteration(GibbsState{it, K, W, z, n_dk, n_kw, n_k, docs});
    if (!is_sample_sweep(cfg, it)) continue;

    ++n_samples;
    const double ll = log_p_words_given_topics(n_kw, n_k, W, eta);
    model.sample_log_likelihoods.push_back(ll);
    for (std::size_t k = 0; k < K; ++k) {
      const double denom = static_cast<double>(n_k[k]) + w_eta;
      for (std::size_t v = 0; v < W; ++v) {
        model.phi[k * vocab_size + expand[v]] += (static_cast<double>(n_kw[k * W + v]) + eta) / denom;
      }
    }
    if (options.samples) {
      GibbsSample s;
      s.z = z;
      s.log_likelihood = ll;
      s.theta.resize(D * K);
      for (std::size_t d = 0; d < D; ++d) {
        const double denom = static_cast<double>(docs[d].size()) + static_cast<double>(K) * alpha;
        for (std::size_t k = 0; k < K; ++k) s.theta[d * K + k] = (static_cast<double>(n_dk[d * K + k]) + alpha) / denom;
      }
      s.phi.assign(K * vocab_size, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const double denom = static_cast<double>(n_k[k]) + w_eta;
        for (std::size_t v = 0; v < W; ++v) {
          s.phi[k * vocab_size + expand[v]] = (static_cast<double>(n_kw[k * W + v]) + eta) / denom;
        }
      }
      options.samples->push_back(std::move(s));
    }
  }

  for (auto& v : model.phi) v /= static_cast<double>(n_samples);
  model.n_kw.assign(K * vocab_size, 0.0);
  model.n_k.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    model.n_k[k] = static_cast<double>(n_k[k]);
    for (std::size_t v = 0; v < W; ++v) model.n_kw[k * vocab_size + expand[v]] = static_cast<double>(n_kw[k * W + v]);
  }
  return model;
}

FoldInResult fold_in(const TopicModel& model, std::span<const TokenId> raw_doc, const LdaConfig& cfg) {
  cfg.validate();
  const std::size_t K = model.k;
  const double alpha = model.alpha;
  FoldInResult out;
  const Document doc = filter_document(raw_doc, model.word_mask);
  if (doc.empty()) {
    out.theta.assign(K, 1.0 / static_cast<double>(K));
    out.empty_after_filter = true;
    return out;
  }

  // Seed from the document so every fold-in of the same text agrees.
  std::uint64_t seed = cfg.seed ^ kFoldInSalt;
  for (TokenId id : doc) seed = (seed ^ id) * 0x100000001b3ULL;
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> z(doc.size());
  std::vector<std::int64_t> n_dk(K, 0);
  std::vector<double> p(K);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) p[k] = model.phi[k * model.vocab_size + doc[i]];
    z[i] = sample_index(rng, p);
    ++n_dk[z[i]];
  }

  out.theta.assign(K, 0.0);
  std::size_t n_samples = 0;
  const double denom = static_cast<double>(doc.size()) + static_cast<double>(K) * alpha;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      --n_dk[z[i]];
      for (std::size_t k = 0; k < K; ++k) {
        p[k] = (static_cast<double>(n_dk[k]) + alpha) * model.phi[k * model.vocab_size + doc[i]];
      }
      z[i] = sample_index(rng, p);
      ++n_dk[z[i]];
    }
    if (!is_sample_sweep(cfg, it)) continue;
    ++n_samples;
    for (std::size_t k = 0; k < K; ++k) out.theta[k] += (static_cast<double>(n_dk[k]) + alpha) / denom;
  }
  for (auto& t : out.theta) t /= static_cast<double>(n_samples);
  return out;
}

SelectionResult select_k(std::span<const Document> docs, std::span<const std::uint8_t> word_mask,
                         std::span<const std::size_t> candidates, const LdaConfig& base) {
  if (candidates.empty()) throw std::invalid_argument("select_k: empty candidate list");
  const std::size_t n = candidates.size();
  std::vector<SelectionEntry> table(n);
  std::vector<std::optional<TopicModel>> models(n);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    auto& entry = table[static_cast<std::size_t>(i)];
    entry.k = candidates[static_cast<std::size_t>(i)];
    try {
      LdaConfig cfg = base;
      cfg.k = entry.k;
      models[static_cast<std::size_t>(i)] = train_gibbs(docs, word_mask, cfg);
      entry.neg_log_likelihood = neg_log_likelihood(models[static_cast<std::size_t>(i)]->sample_log_likelihoods);
      entry.ok = std::isfinite(entry.neg_log_likelihood);
      if (!entry.ok) entry.error = "non-finite likelihood";
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
  }

  SelectionResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < n; ++i) {
    if (!table[i].ok) continue;
    if (!best || table[i].neg_log_likelihood < table[*best].neg_log_likelihood) best = i;
  }
  if (!best) {
    std::string msg = "select_k: every candidate failed";
    for (const auto& e : table) msg += "; K=" + std::to_string(e.k) + ": " + e.error;
    throw std::runtime_error(msg);
  }
  result.best_k = table[*best].k;
  result.best_model = std::move(models[*best]);
  result.table = std::move(table);
  return result;
}

std::vector<std::size_t> align_topic_labels(const TopicModel& model, std::span<const corpus::Example> examples,
                                            std::size_t n_labels, const LdaConfig& fold_cfg) {
  std::vector<std::vector<double>> mass(n_labels, std::vector<double>(model.k, 0.0));
  for (const auto& ex : examples) {
    if (ex.target_topics.empty()) continue;
    const auto theta = fold_in(model, ex.summary, fold_cfg).theta;
    for (const auto& tw : ex.target_topics) {
      if (tw.topic >= n_labels) throw std::invalid_argument("align_topic_labels: label out of range");
      for (std::size_t k = 0; k < model.k; ++k) mass[tw.topic][k] += tw.weight * theta[k];
    }
  }
  std::vector<std::size_t> map(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    map[l] = static_cast<std::size_t>(std::max_element(mass[l].begin(), mass[l].end()) - mass[l].begin());
  }
  return map;
}

void TopicModel::save(const std::filesystem::path& path) const {
  numerics::Checkpoint ck;
  ck.kind = "lda";
  ck.meta = {{"k", k},
             {"vocab_size", vocab_size},
             {"alpha", alpha},
             {"eta", eta},
             {"iterations", config.iterations},
             {"burn_in", config.burn_in},
             {"lag", config.lag},
             {"seed", config.seed},
             {"vocab_hash", vocab_hash},
             {"extra", extra}};
  std::vector<double> mask(word_mask.begin(), word_mask.end());
  ck.tensors.push_back({"phi", numerics::Tensor(k, vocab_size, phi)});
  ck.tensors.push_back({"n_kw", numerics::Tensor(k, vocab_size, n_kw)});
  ck.tensors.push_back({"n_k", row_tensor(n_k)});
  ck.tensors.push_back({"word_mask", row_tensor(mask)});
  if (!sample_log_likelihoods.empty()) {
    ck.tensors.push_back({"sample_log_likelihoods", row_tensor(sample_log_likelihoods)});
  }
  numerics::save_checkpoint(path, ck);
}

TopicModel TopicModel::load(const std::filesystem::path& path) {
  const auto ck = numerics::load_checkpoint(path, "lda");
  TopicModel m;
  const auto& meta = ck.meta;
  m.k = meta.at("k").get<std::size_t>();
  m.vocab_size = meta.at("vocab_size").get<std::size_t>();
  m.alpha = meta.at("alpha").get<double>();
  m.eta = meta.at("eta").get<double>();
  m.config.k = m.k;
  m.config.alpha = m.alpha;
  m.config.eta = m.eta;
  m.config.iterations = meta.at("iterations").get<std::size_t>();
  m.config.burn_in = meta.at("burn_in").get<std::size_t>();
  m.config.lag = meta.at("lag").get<std::size_t>();
  m.config.seed = meta.at("seed").get<std::uint64_t>();
  m.vocab_hash = meta.at("vocab_hash").get<std::uint64_t>();
  if (meta.contains("extra")) m.extra = meta.at("extra");

  auto expect = [&](const std::string& name, std::size_t r, std::size_t c) -> const numerics::Tensor& {
    const auto& t = ck.get(name);
    if (t.rows() != r || t.cols() != c) {
      throw std::runtime_error("lda checkpoint: tensor '" + name + "' has shape " + numerics::shape_string(t) +
                               ", expected [" + std::to_string(r) + ", " + std::to_string(c) + "]");
    }
    return t;
  };
  const auto phi_t = expect("phi", m.k, m.vocab_size).data();
  m.phi.assign(phi_t.begin(), phi_t.end());
  const auto nkw_t = expect("n_kw", m.k, m.vocab_size).data();
  m.n_kw.assign(nkw_t.begin(), nkw_t.end());
  const auto nk_t = expect("n_k", 1, m.k).data();
  m.n_k.assign(nk_t.begin(), nk_t.end());
  const auto mask_t = expect("word_mask", 1, m.vocab_size).data();
  m.word_mask.resize(m.vocab_size);
  for (std::size_t i = 0; i < m.vocab_size; ++i) m.word_mask[i] = mask_t[i] != 0.0 ? 1 : 0;
  if (ck.contains("sample_log_likelihoods")) {
    const auto s = ck.get("sample_log_likelihoods").data();
    m.sample_log_likelihoods.assign(s.begin(), s.end());
  }
  return m;
}

}  // namespace topicsum::lda
