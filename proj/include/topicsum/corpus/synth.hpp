#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "topicsum/corpus/dataset.hpp"

namespace topicsum::corpus {

// Generative stand-in for a topic-focused summarization corpus. Each
// document mixes two of `k_true` topics whose vocabularies are disjoint, plus
// a fraction of background stopwords; each document yields two examples whose
// summaries are drawn from exactly one of its topics.
struct SynthConfig {
  std::size_t k_true = 4;
  std::size_t vocab_per_topic = 6;
  std::size_t doc_len = 30;
  std::size_t summary_len = 8;
  std::size_t n_docs = 200;
  // Symmetric Beta concentration for the share of the first topic.
  double mixture_concentration = 20.0;
  // Probability that a source token is a background stopword.
  double background_rate = 0.15;
  // Emit a topic-sentence prompt naming the target topic's top words.
  bool topic_prompts = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthDocument {
  std::size_t topic_a = 0;
  std::size_t topic_b = 0;
  double share_a = 0.5;  // share of topical tokens drawn from topic_a
};

struct SynthCorpus {
  std::vector<TextExample> examples;          // two per document, ids "d<i>-a"/"d<i>-b"
  std::vector<std::size_t> example_document;  // document index of each example
  std::vector<SynthDocument> documents;
  std::vector<std::vector<std::string>> topic_words;  // per topic, most probable first
  std::vector<std::vector<double>> topic_word_probs;
  std::vector<std::string> background_words;
};

SynthCorpus synth_corpus(const SynthConfig& cfg);

// Splits by document so both summaries of a document land on the same side.
// The last ceil(test_fraction * n_docs) documents of a seeded shuffle go to test.
struct SynthSplit {
  std::vector<TextExample> train;
  std::vector<TextExample> test;
  std::vector<std::size_t> train_documents;
  std::vector<std::size_t> test_documents;
};
SynthSplit split_by_document(const SynthCorpus& corpus, double test_fraction, std::uint64_t seed);

}  // namespace topicsum::corpus
