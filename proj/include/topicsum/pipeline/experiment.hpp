#pragma once

// In-memory stages shared by the CLI subcommands and the pipeline: corpus
// preparation, LDA with label alignment, guidance inputs, decoding.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicsum/corpus/dataset.hpp"
#include "topicsum/corpus/synth.hpp"
#include "topicsum/decode/decode.hpp"
#include "topicsum/guidance/guidance.hpp"
#include "topicsum/lda/lda.hpp"
#include "topicsum/metrics/metrics.hpp"
#include "topicsum/model/transformer.hpp"

namespace topicsum::pipeline {

struct PreparedCorpus {
  std::vector<corpus::TextExample> train_text, test_text;
  corpus::Vocabulary vocab;
  std::vector<corpus::Example> train, test;  // target topics still in label space
};

// Builds the vocabulary over the training split only.
PreparedCorpus prepare_corpus(std::vector<corpus::TextExample> train, std::vector<corpus::TextExample> test,
                              std::size_t min_count);

// Distinct training sources in first-seen order (documents with two
// summaries appear once).
std::vector<lda::Document> lda_documents(std::span<const corpus::Example> examples);

struct TopicStage {
  lda::TopicModel model;
  std::vector<std::size_t> label_map;  // label -> LDA topic
};

// Number of distinct target labels (max label + 1; 0 when none).
std::size_t label_count(std::span<const corpus::Example> examples);

// LDA word mask of the corpus vocabulary.
std::vector<std::uint8_t> word_mask(const PreparedCorpus& data, const corpus::Stopwords& stopwords);

// Trains LDA on the distinct training sources and aligns the corpus labels.
TopicStage train_topics(const PreparedCorpus& data, const lda::LdaConfig& cfg, std::size_t n_labels,
                        const corpus::Stopwords& stopwords = corpus::default_stopwords());

// Copies of `examples` with target topics mapped into LDA topic ids.
std::vector<corpus::Example> relabel(std::span<const corpus::Example> examples, std::span<const std::size_t> label_map);

// Encoder inputs under a guidance mode (kNone = no guidance vector).
std::vector<model::ModelInput> build_inputs(std::span<const corpus::Example> examples, guidance::Mode mode,
                                            const guidance::GuidanceContext& ctx, bool use_prompt);

// One beam search per input.
std::vector<decode::Hypothesis> generate_all(const model::Transformer& m, std::span<const model::ModelInput> inputs,
                                             const decode::DecodeConfig& cfg);

std::vector<corpus::TextExample> to_text(std::span<const decode::Hypothesis> hyps,
                                         std::span<const model::ModelInput> inputs, const corpus::Vocabulary& vocab);

nlohmann::json to_json(const corpus::SynthConfig& c);
corpus::SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const lda::LdaConfig& c);
lda::LdaConfig lda_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const guidance::FfnConfig& c);
guidance::FfnConfig ffn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const model::TrainConfig& c);
model::TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace topicsum::pipeline
