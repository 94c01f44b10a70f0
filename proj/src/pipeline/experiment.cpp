#include "topicsum/pipeline/experiment.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace topicsum::pipeline {

PreparedCorpus prepare_corpus(std::vector<corpus::TextExample> train, std::vector<corpus::TextExample> test,
                              std::size_t min_count) {
  if (train.empty()) throw std::invalid_argument("prepare_corpus: empty training split");
  PreparedCorpus p;
  p.train_text = std::move(train);
  p.test_text = std::move(test);
  p.vocab = corpus::Vocabulary::build(corpus::tokenized_texts(p.train_text), min_count);
  p.train = corpus::encode_examples(p.train_text, p.vocab);
  p.test = corpus::encode_examples(p.test_text, p.vocab);
  return p;
}

std::vector<lda::Document> lda_documents(std::span<const corpus::Example> examples) {
  std::vector<lda::Document> docs;
  std::set<std::vector<corpus::TokenId>> seen;
  for (const auto& ex : examples) {
    if (seen.insert(ex.source).second) docs.push_back(ex.source);
  }
  return docs;
}

std::size_t label_count(std::span<const corpus::Example> examples) {
  std::size_t n = 0;
  for (const auto& ex : examples) {
    for (const auto& tw : ex.target_topics) n = std::max(n, tw.topic + 1);
  }
  return n;
}

std::vector<std::uint8_t> word_mask(const PreparedCorpus& data, const corpus::Stopwords& stopwords) {
  return lda::lda_word_mask(data.vocab, stopwords);
}

TopicStage train_topics(const PreparedCorpus& data, const lda::LdaConfig& cfg, std::size_t n_labels,
                        const corpus::Stopwords& stopwords) {
  TopicStage t;
  t.model = lda::train_gibbs(lda_documents(data.train), word_mask(data, stopwords), cfg);
  t.model.vocab_hash = data.vocab.hash();
  if (n_labels > 0) t.label_map = lda::align_topic_labels(t.model, data.train, n_labels, cfg);
  return t;
}

std::vector<corpus::Example> relabel(std::span<const corpus::Example> examples, std::span<const std::size_t> label_map) {
  std::vector<corpus::Example> out(examples.begin(), examples.end());
  if (label_map.empty()) return out;
  for (auto& ex : out) {
    for (auto& tw : ex.target_topics) {
      if (tw.topic >= label_map.size()) {
        throw std::invalid_argument("example '" + ex.id + "' has target label " + std::to_string(tw.topic) +
                                    " without a topic mapping");
      }
      tw.topic = label_map[tw.topic];
    }
  }
  return out;
}

std::vector<model::ModelInput> build_inputs(std::span<const corpus::Example> examples, guidance::Mode mode,
                                            const guidance::GuidanceContext& ctx, bool use_prompt) {
  std::vector<model::ModelInput> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (mode == guidance::Mode::kNone) {
      out.push_back(model::make_input(ex, nullptr, use_prompt));
    } else {
      const auto g = guidance::guidance_for_example(ex, mode, ctx);
      out.push_back(model::make_input(ex, &g, use_prompt));
    }
  }
  return out;
}

std::vector<decode::Hypothesis> generate_all(const model::Transformer& m, std::span<const model::ModelInput> inputs,
                                             const decode::DecodeConfig& cfg) {
  cfg.validate();
  std::vector<decode::Hypothesis> out(inputs.size());
  std::vector<std::string> errors(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      out[i] = decode::generate(m, inputs[i], cfg);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("generate '" + inputs[i].id + "': " + errors[i]);
  }
  return out;
}

std::vector<corpus::TextExample> to_text(std::span<const decode::Hypothesis> hyps,
                                         std::span<const model::ModelInput> inputs, const corpus::Vocabulary& vocab) {
  std::vector<corpus::TextExample> out;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    corpus::TextExample t;
    t.id = inputs[i].id;
    t.summary = vocab.decode_text(hyps[i].tokens);
    out.push_back(std::move(t));
  }
  return out;
}

nlohmann::json to_json(const corpus::SynthConfig& c) {
  return {{"k_true", c.k_true},
          {"vocab_per_topic", c.vocab_per_topic},
          {"doc_len", c.doc_len},
          {"summary_len", c.summary_len},
          {"n_docs", c.n_docs},
          {"mixture_concentration", c.mixture_concentration},
          {"background_rate", c.background_rate},
          {"topic_prompts", c.topic_prompts},
          {"seed", c.seed}};
}

corpus::SynthConfig synth_config_from_json(const nlohmann::json& j) {
  corpus::SynthConfig c;
  c.k_true = j.value("k_true", c.k_true);
  c.vocab_per_topic = j.value("vocab_per_topic", c.vocab_per_topic);
  c.doc_len = j.value("doc_len", c.doc_len);
  c.summary_len = j.value("summary_len", c.summary_len);
  c.n_docs = j.value("n_docs", c.n_docs);
  c.mixture_concentration = j.value("mixture_concentration", c.mixture_concentration);
  c.background_rate = j.value("background_rate", c.background_rate);
  c.topic_prompts = j.value("topic_prompts", c.topic_prompts);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const lda::LdaConfig& c) {
  nlohmann::json j = {{"k", c.k},       {"eta", c.eta},   {"iterations", c.iterations},
                      {"burn_in", c.burn_in}, {"lag", c.lag}, {"seed", c.seed}};
  j["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
  return j;
}

lda::LdaConfig lda_config_from_json(const nlohmann::json& j) {
  lda::LdaConfig c;
  c.k = j.value("k", c.k);
  if (j.contains("alpha") && !j["alpha"].is_null()) c.alpha = j["alpha"].get<double>();
  c.eta = j.value("eta", c.eta);
  c.iterations = j.value("iterations", c.iterations);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.lag = j.value("lag", c.lag);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const guidance::FfnConfig& c) {
  return {{"hidden", c.hidden}, {"epochs", c.epochs}, {"lr", c.lr}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}

guidance::FfnConfig ffn_config_from_json(const nlohmann::json& j) {
  guidance::FfnConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const model::TrainConfig& c) {
  return {{"epochs", c.epochs},       {"lr", c.lr},     {"batch_size", c.batch_size},
          {"clip_norm", c.clip_norm}, {"seed", c.seed}, {"restore_best", c.restore_best}};
}

model::TrainConfig train_config_from_json(const nlohmann::json& j) {
  model::TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.restore_best = j.value("restore_best", c.restore_best);
  return c;
}

}  // namespace topicsum::pipeline
