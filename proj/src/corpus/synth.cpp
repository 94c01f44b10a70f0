#include "topicsum/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace topicsum::corpus {

namespace {

// Background filler drawn from the default stopword list.
const std::vector<std::string> kBackground = {"the", "of", "and", "to", "in", "a",
                                              "is", "was", "for", "on", "with", "as"};

std::size_t draw(std::mt19937_64& rng, const std::vector<double>& cdf) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * cdf.back();
  return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (k_true < 2) throw std::invalid_argument("synth: k_true must be >= 2");
  if (vocab_per_topic < 2) throw std::invalid_argument("synth: vocab_per_topic must be >= 2");
  if (doc_len == 0 || summary_len == 0 || n_docs == 0) {
    throw std::invalid_argument("synth: doc_len, summary_len and n_docs must be positive");
  }
  if (!(mixture_concentration > 0.0)) throw std::invalid_argument("synth: mixture_concentration must be > 0");
  if (background_rate < 0.0 || background_rate >= 1.0) {
    throw std::invalid_argument("synth: background_rate must be in [0, 1)");
  }
}

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SynthCorpus corpus;
  corpus.background_words = kBackground;

  // Zipf-like within-topic word probabilities.
  std::vector<double> probs(cfg.vocab_per_topic);
  for (std::size_t j = 0; j < probs.size(); ++j) probs[j] = 1.0 / static_cast<double>(j + 1);
  const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (auto& p : probs) p /= z;
  std::vector<double> cdf(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cdf.begin());

  for (std::size_t k = 0; k < cfg.k_true; ++k) {
    std::vector<std::string> words;
    for (std::size_t j = 0; j < cfg.vocab_per_topic; ++j) {
      words.push_back("t" + std::to_string(k) + "w" + std::to_string(j));
    }
    corpus.topic_words.push_back(std::move(words));
    corpus.topic_word_probs.push_back(probs);
  }

  std::gamma_distribution<double> gamma(cfg.mixture_concentration, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_bg(0, kBackground.size() - 1);

  auto summary_of = [&](std::size_t topic) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < cfg.summary_len; ++i) words.push_back(corpus.topic_words[topic][draw(rng, cdf)]);
    return join(words);
  };

  for (std::size_t d = 0; d < cfg.n_docs; ++d) {
    SynthDocument doc;
    doc.topic_a = std::uniform_int_distribution<std::size_t>(0, cfg.k_true - 1)(rng);
    doc.topic_b = std::uniform_int_distribution<std::size_t>(0, cfg.k_true - 2)(rng);
    if (doc.topic_b >= doc.topic_a) ++doc.topic_b;
    const double ga = gamma(rng), gb = gamma(rng);
    doc.share_a = ga / (ga + gb);

    std::vector<std::string> words;
    for (std::size_t i = 0; i < cfg.doc_len; ++i) {
      if (unit(rng) < cfg.background_rate) {
        words.push_back(kBackground[pick_bg(rng)]);
      } else {
        const std::size_t topic = unit(rng) < doc.share_a ? doc.topic_a : doc.topic_b;
        words.push_back(corpus.topic_words[topic][draw(rng, cdf)]);
      }
    }
    const std::string source = join(words);

    for (int side = 0; side < 2; ++side) {
      const std::size_t topic = side == 0 ? doc.topic_a : doc.topic_b;
      TextExample ex;
      ex.id = "d" + std::to_string(d) + (side == 0 ? "-a" : "-b");
      ex.source = source;
      ex.summary = summary_of(topic);
      ex.target_topics = {{topic, 1.0}};
      if (cfg.topic_prompts) {
        const auto& tw = corpus.topic_words[topic];
        ex.topic_prompt = "about " + tw[0] + " " + tw[1];
      }
      corpus.examples.push_back(std::move(ex));
      corpus.example_document.push_back(d);
    }
    corpus.documents.push_back(doc);
  }
  return corpus;
}

SynthSplit split_by_document(const SynthCorpus& corpus, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw std::invalid_argument("split: test_fraction must be in [0, 1)");
  }
  const std::size_t n = corpus.documents.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  std::vector<char> is_test(n, 0);
  SynthSplit split;
  for (std::size_t i = n - n_test; i < n; ++i) is_test[order[i]] = 1;
  for (std::size_t d = 0; d < n; ++d) (is_test[d] ? split.test_documents : split.train_documents).push_back(d);
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    (is_test[corpus.example_document[i]] ? split.test : split.train).push_back(corpus.examples[i]);
  }
  return split;
}

}  // namespace topicsum::corpus
