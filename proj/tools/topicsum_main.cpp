// topicsum command line: corpus synthesis, topic modeling, guidance, summarizer
// training, decoding and scoring. Exit codes: 0 success, 1 usage, 2 stage failure.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topicsum/hash.hpp"
#include "topicsum/pipeline/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace topicsum;
using pipeline::ConfigError;
using pipeline::RunConfig;
using pipeline::StageError;

namespace {

// A subcommand with an optional --config file and flag overrides applied on top.
struct Command {
  CLI::App* app = nullptr;
  std::string name;
  std::shared_ptr<std::string> config_path = std::make_shared<std::string>();
  std::vector<std::function<void(RunConfig&)>> overrides;

  RunConfig resolve() const {
    RunConfig c = config_path->empty() ? RunConfig{} : pipeline::load_run_config(*config_path);
    for (const auto& f : overrides) f(c);
    return c;
  }

  template <class T, class F>
  CLI::Option* flag(const std::string& spec, F apply, const std::string& desc) {
    auto v = std::make_shared<T>();
    auto* o = app->add_option(spec, *v, desc);
    overrides.push_back([v, o, apply](RunConfig& c) {
      if (o->count()) apply(c, *v);
    });
    return o;
  }

  CLI::Option* toggle(const std::string& spec, std::function<void(RunConfig&, bool)> apply, const std::string& desc) {
    auto v = std::make_shared<bool>(false);
    auto* o = app->add_flag(spec, *v, desc);
    overrides.push_back([v, o, apply](RunConfig& c) {
      if (o->count()) apply(c, *v);
    });
    return o;
  }
};

Command make(CLI::App& root, const std::string& name, const std::string& desc) {
  Command c;
  c.name = name;
  c.app = root.add_subcommand(name, desc);
  c.app->add_option("--config", *c.config_path, "JSON run config; flags override its fields")->check(CLI::ExistingFile);
  c.flag<std::uint64_t>("--seed", [](RunConfig& r, std::uint64_t s) { r.set_seed(s); }, "run seed");
  return c;
}

void add_lda_flags(Command& c) {
  c.flag<std::size_t>("--k", [](RunConfig& r, std::size_t v) { r.lda.k = v; }, "number of topics");
  c.flag<double>("--alpha", [](RunConfig& r, double v) { r.lda.alpha = v; }, "document-topic prior (default 50/K)");
  c.flag<double>("--eta", [](RunConfig& r, double v) { r.lda.eta = v; }, "topic-word prior");
  c.flag<std::size_t>("--iterations", [](RunConfig& r, std::size_t v) { r.lda.iterations = v; }, "Gibbs sweeps");
  c.flag<std::size_t>("--burn-in", [](RunConfig& r, std::size_t v) { r.lda.burn_in = v; }, "sweeps before sampling");
  c.flag<std::size_t>("--lag", [](RunConfig& r, std::size_t v) { r.lda.lag = v; }, "sweeps between samples");
  c.flag<std::size_t>("--min-count", [](RunConfig& r, std::size_t v) { r.min_count = v; }, "vocabulary cutoff");
  c.flag<std::string>("--stopwords", [](RunConfig& r, const std::string& v) { r.stopwords_path = v; },
                      "stopword file (default: built-in list)")
      ->check(CLI::ExistingFile);
}

void add_decode_flags(Command& c) {
  c.flag<std::size_t>("--beam", [](RunConfig& r, std::size_t v) { r.decode.beam_size = v; }, "beam size");
  c.flag<double>("--length-penalty", [](RunConfig& r, double v) { r.decode.length_penalty = v; },
                 "score = logprob / length^p");
  c.flag<std::size_t>("--max-len", [](RunConfig& r, std::size_t v) { r.decode.max_length = v; }, "max tokens");
  c.flag<std::size_t>("--min-len", [](RunConfig& r, std::size_t v) { r.decode.min_length = v; }, "min tokens");
  c.flag<std::size_t>("--no-repeat-ngram", [](RunConfig& r, std::size_t v) { r.decode.no_repeat_ngram = v; },
                      "blocked n-gram size, 0 disables");
  c.toggle("--early-stopping,!--no-early-stopping", [](RunConfig& r, bool v) { r.decode.early_stopping = v; },
           "stop once beam_size hypotheses finished");
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Stage inputs written by train-lda / select-topics.
struct TopicsDir {
  corpus::Vocabulary vocab;
  lda::TopicModel model;
  std::vector<std::size_t> label_map;
};

TopicsDir load_topics(const fs::path& dir) {
  TopicsDir t;
  t.vocab = corpus::Vocabulary::load(dir / "vocab.json");
  t.model = lda::TopicModel::load(dir / "lda.ckpt");
  if (t.model.vocab_hash != t.vocab.hash()) throw std::runtime_error("lda.ckpt was trained on another vocabulary");
  if (fs::exists(dir / "labels.json")) t.label_map = pipeline::read_labels(dir / "labels.json");
  return t;
}

void write_topics(const fs::path& dir, const pipeline::PreparedCorpus& data, pipeline::TopicStage& t,
                  const json& prov) {
  fs::create_directories(dir);
  data.vocab.save(dir / "vocab.json");
  t.model.extra = prov;
  t.model.save(dir / "lda.ckpt");
  pipeline::write_labels(dir / "labels.json", t.label_map, prov);
}

template <class F>
void stage(const std::string& name, F body) {
  try {
    body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topic-controlled summarization toolkit"};
  app.require_subcommand(1);

  // synth-corpus
  auto synth = make(app, "synth-corpus", "write a synthetic two-topic-per-document corpus");
  std::string synth_out;
  synth.app->add_option("--out", synth_out, "output directory")->required();
  auto synth_field = [&](auto member) {
    return [member](RunConfig& r, auto v) {
      if (!r.synth) r.synth = corpus::SynthConfig{};
      (*r.synth).*member = v;
    };
  };
  synth.flag<std::size_t>("--k-true", synth_field(&corpus::SynthConfig::k_true), "number of topics");
  synth.flag<std::size_t>("--vocab-per-topic", synth_field(&corpus::SynthConfig::vocab_per_topic), "words per topic");
  synth.flag<std::size_t>("--doc-len", synth_field(&corpus::SynthConfig::doc_len), "source length");
  synth.flag<std::size_t>("--summary-len", synth_field(&corpus::SynthConfig::summary_len), "summary length");
  synth.flag<std::size_t>("--n-docs", synth_field(&corpus::SynthConfig::n_docs), "documents (two examples each)");
  synth.flag<double>("--concentration", synth_field(&corpus::SynthConfig::mixture_concentration),
                     "Beta concentration of the topic share");
  synth.flag<double>("--background-rate", synth_field(&corpus::SynthConfig::background_rate),
                     "share of stopword tokens in sources");
  synth.flag<std::uint64_t>("--synth-seed", synth_field(&corpus::SynthConfig::seed), "generator seed");
  synth.toggle("--prompts", synth_field(&corpus::SynthConfig::topic_prompts), "emit topic prompts");
  synth.flag<double>("--test-fraction", [](RunConfig& r, double v) { r.test_fraction = v; }, "held-out share");

  // train-lda and select-topics
  auto tlda = make(app, "train-lda", "train LDA on the training sources");
  std::string tlda_train, tlda_out;
  tlda.app->add_option("--train", tlda_train, "training JSONL")->required()->check(CLI::ExistingFile);
  tlda.app->add_option("--out", tlda_out, "output directory (vocab.json, lda.ckpt, labels.json)")->required();
  add_lda_flags(tlda);

  auto sel = make(app, "select-topics", "choose K by the harmonic-mean likelihood and keep the best model");
  std::string sel_train, sel_out;
  sel.app->add_option("--train", sel_train, "training JSONL")->required()->check(CLI::ExistingFile);
  sel.app->add_option("--out", sel_out, "output directory")->required();
  sel.flag<std::vector<std::size_t>>(
      "--candidates", [](RunConfig& r, const std::vector<std::size_t>& v) { r.select_candidates = v; },
      "candidate K values (default 50 100 150 200 250 300)");
  add_lda_flags(sel);

  // train-ffn
  auto tffn = make(app, "train-ffn", "train the guidance reconstructor");
  std::string ffn_train, ffn_topics, ffn_out;
  tffn.app->add_option("--train", ffn_train, "training JSONL")->required()->check(CLI::ExistingFile);
  tffn.app->add_option("--topics", ffn_topics, "train-lda output directory")->required()->check(CLI::ExistingDirectory);
  tffn.app->add_option("--out", ffn_out, "checkpoint path")->required();
  tffn.flag<std::size_t>("--epochs", [](RunConfig& r, std::size_t v) { r.ffn.epochs = v; }, "epochs (default 15)");
  tffn.flag<std::size_t>("--hidden", [](RunConfig& r, std::size_t v) { r.ffn.hidden = v; },
                         "hidden width, 0 = single affine map (default 0)");
  tffn.flag<double>("--lr", [](RunConfig& r, double v) { r.ffn.lr = v; }, "Adam learning rate");
  tffn.flag<std::size_t>("--batch-size", [](RunConfig& r, std::size_t v) { r.ffn.batch_size = v; }, "batch size");

  // train-summarizer
  auto tsum = make(app, "train-summarizer", "train the encoder-decoder summarizer");
  std::string sum_train, sum_valid, sum_topics, sum_ffn, sum_out, sum_ckdir, sum_mode = "none";
  bool sum_topical = false;
  tsum.app->add_option("--train", sum_train, "training JSONL")->required()->check(CLI::ExistingFile);
  tsum.app->add_option("--valid", sum_valid, "validation JSONL")->check(CLI::ExistingFile);
  tsum.app->add_option("--topics", sum_topics, "train-lda output directory")->check(CLI::ExistingDirectory);
  tsum.app->add_option("--ffn", sum_ffn, "FFN checkpoint (mode ffn)")->check(CLI::ExistingFile);
  tsum.app->add_option("--out", sum_out, "checkpoint path")->required();
  tsum.app->add_option("--checkpoint-dir", sum_ckdir, "write a checkpoint after every epoch");
  tsum.app->add_option("--mode", sum_mode, "guidance: none, ffn, lda-target, controlled")
      ->check(CLI::IsMember({"none", "ffn", "lda-target", "controlled"}));
  tsum.app->add_flag("--topical", sum_topical, "use topical attention in cross-attention");
  tsum.flag<std::size_t>("--d-model", [](RunConfig& r, std::size_t v) { r.model.d_model = v; }, "model width");
  tsum.flag<std::size_t>("--heads", [](RunConfig& r, std::size_t v) { r.model.n_heads = v; }, "attention heads");
  tsum.flag<std::size_t>("--layers", [](RunConfig& r, std::size_t v) {
    r.model.n_encoder_layers = v;
    r.model.n_decoder_layers = v;
  }, "encoder and decoder layers");
  tsum.flag<std::size_t>("--ffn-width", [](RunConfig& r, std::size_t v) { r.model.ffn_width = v; }, "MLP width");
  tsum.flag<std::size_t>("--max-positions", [](RunConfig& r, std::size_t v) { r.model.max_positions = v; },
                         "longest sequence");
  tsum.flag<std::size_t>("--epochs", [](RunConfig& r, std::size_t v) { r.train.epochs = v; }, "epochs");
  tsum.flag<double>("--lr", [](RunConfig& r, double v) { r.train.lr = v; }, "Adam learning rate");
  tsum.flag<std::size_t>("--batch-size", [](RunConfig& r, std::size_t v) { r.train.batch_size = v; }, "batch size");
  tsum.toggle("--restore-best", [](RunConfig& r, bool v) { r.train.restore_best = v; },
              "keep the epoch with the lowest validation loss");
  tsum.toggle("--prompts", [](RunConfig& r, bool v) { r.use_prompts = v; }, "prepend topic prompts");

  // generate
  auto gen = make(app, "generate", "beam-search summaries for a JSONL file");
  std::string gen_model, gen_input, gen_topics, gen_ffn, gen_out, gen_mode;
  gen.app->add_option("--model", gen_model, "summarizer checkpoint")->required()->check(CLI::ExistingFile);
  gen.app->add_option("--input", gen_input, "input JSONL")->required()->check(CLI::ExistingFile);
  gen.app->add_option("--topics", gen_topics, "train-lda output directory")->required()->check(CLI::ExistingDirectory);
  gen.app->add_option("--ffn", gen_ffn, "FFN checkpoint (mode ffn)")->check(CLI::ExistingFile);
  gen.app->add_option("--mode", gen_mode, "guidance mode (default: the one used in training)")
      ->check(CLI::IsMember({"none", "ffn", "lda-target", "controlled"}));
  gen.app->add_option("--out", gen_out, "output JSONL")->required();
  add_decode_flags(gen);
  gen.toggle("--prompts", [](RunConfig& r, bool v) { r.use_prompts = v; }, "prepend topic prompts");

  // evaluate
  auto eval = make(app, "evaluate", "ROUGE and topic focus of generated summaries");
  std::string ev_gen, ev_ref, ev_topics, ev_out;
  eval.app->add_option("--generated", ev_gen, "generated JSONL")->required()->check(CLI::ExistingFile);
  eval.app->add_option("--reference", ev_ref, "reference JSONL")->required()->check(CLI::ExistingFile);
  eval.app->add_option("--topics", ev_topics, "train-lda output directory")->required()->check(CLI::ExistingDirectory);
  eval.app->add_option("--out", ev_out, "report path (default stdout)");

  // compare
  auto cmp = app.add_subcommand("compare", "per-metric deltas between two reports (B - A)");
  std::string cmp_a, cmp_b, cmp_out;
  cmp->add_option("a", cmp_a, "baseline report")->required()->check(CLI::ExistingFile);
  cmp->add_option("b", cmp_b, "candidate report")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_out, "output path (default stdout)");

  // pipeline
  auto pipe = app.add_subcommand("pipeline", "run every stage from one config");
  std::string pipe_config, pipe_out;
  std::optional<std::uint64_t> pipe_seed;
  bool pipe_quiet = false;
  pipe->add_option("--config", pipe_config, "JSON run config")->required()->check(CLI::ExistingFile);
  pipe->add_option("--out", pipe_out, "output directory (overrides output_dir)");
  pipe->add_option("--seed", pipe_seed, "run seed (overrides seed)");
  pipe->add_flag("-q,--quiet", pipe_quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth.app) {
      auto cfg = synth.resolve();
      if (!cfg.synth) cfg.synth = corpus::SynthConfig{};
      stage("synth-corpus", [&] {
        cfg.synth->validate();
        const fs::path dir = synth_out;
        const auto corpus = corpus::synth_corpus(*cfg.synth);
        const auto split = corpus::split_by_document(corpus, cfg.test_fraction, cfg.synth->seed);
        fs::create_directories(dir);
        corpus::write_jsonl(dir / "train.jsonl", split.train);
        corpus::write_jsonl(dir / "test.jsonl", split.test);
        pipeline::write_json(dir / "corpus.json", {{"synth", pipeline::to_json(*cfg.synth)},
                                                   {"test_fraction", cfg.test_fraction},
                                                   {"topic_words", corpus.topic_words},
                                                   {"background_words", corpus.background_words},
                                                   {"train_hash", pipeline::file_hash(dir / "train.jsonl")},
                                                   {"test_hash", pipeline::file_hash(dir / "test.jsonl")}});
        log_line("wrote " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) +
                 " test examples to " + dir.string());
      });
    } else if (*tlda.app || *sel.app) {
      const bool selecting = sel.app->parsed();
      auto cfg = selecting ? sel.resolve() : tlda.resolve();
      if (selecting && cfg.select_candidates.empty()) cfg.select_candidates = lda::default_candidate_ks();
      if (!selecting) cfg.select_candidates.clear();
      const fs::path out = selecting ? sel_out : tlda_out;
      const std::string train_path = selecting ? sel_train : tlda_train;
      stage(selecting ? "select-topics" : "train-lda", [&] {
        const auto data = pipeline::prepare_corpus(corpus::read_jsonl(train_path), {}, cfg.min_count);
        json selection;
        auto t = pipeline::fit_topics(cfg, data, &selection);
        write_topics(out, data, t, pipeline::provenance(cfg));
        if (selecting) {
          pipeline::write_json(out / "selection.json", selection);
          std::cout << selection.dump(2) << '\n';
        }
        log_line("K = " + std::to_string(t.model.k) + ", |V| = " + std::to_string(data.vocab.size()) + ", wrote " +
                 out.string());
      });
    } else if (*tffn.app) {
      auto cfg = tffn.resolve();
      stage("train-ffn", [&] {
        cfg.ffn.validate();
        const auto topics = load_topics(ffn_topics);
        const auto examples = pipeline::relabel(
            corpus::encode_examples(corpus::read_jsonl(ffn_train), topics.vocab), topics.label_map);
        auto w = guidance::init_ffn(topics.vocab.size(), cfg.ffn.hidden, cfg.seed);
        const auto rep = guidance::train_ffn(w, guidance::ffn_pairs(examples, topics.model, topics.model.config), cfg.ffn);
        w.vocab_hash = topics.vocab.hash();
        w.config_hash = cfg.hash();
        w.save(ffn_out);
        log_line("final loss " + std::to_string(rep.epoch_loss.back()) + ", target entropy " +
                 std::to_string(rep.target_entropy));
      });
    } else if (*tsum.app) {
      auto cfg = tsum.resolve();
      const auto mode = guidance::parse_mode(sum_mode);
      if (sum_topical && mode == guidance::Mode::kNone) {
        throw ConfigError("--topical needs a guidance --mode other than none");
      }
      if (mode != guidance::Mode::kNone && sum_topics.empty()) throw ConfigError("--mode " + sum_mode + " needs --topics");
      if (mode == guidance::Mode::kFfn && sum_ffn.empty()) throw ConfigError("--mode ffn needs --ffn");
      stage("train-summarizer", [&] {
        std::optional<TopicsDir> topics;
        corpus::Vocabulary vocab;
        if (!sum_topics.empty()) {
          topics = load_topics(sum_topics);
          vocab = topics->vocab;
        } else {
          vocab = corpus::Vocabulary::build(corpus::tokenized_texts(corpus::read_jsonl(sum_train)), cfg.min_count);
        }
        std::optional<guidance::FfnWeights> ffn;
        if (!sum_ffn.empty()) ffn = guidance::FfnWeights::load(sum_ffn);
        guidance::GuidanceContext ctx;
        std::vector<std::size_t> label_map;
        if (topics) {
          ctx = {&topics->model, ffn ? &*ffn : nullptr, topics->model.config};
          label_map = topics->label_map;
        }
        auto inputs = [&](const std::string& path) {
          const auto ex = pipeline::relabel(corpus::encode_examples(corpus::read_jsonl(path), vocab), label_map);
          return pipeline::build_inputs(ex, mode, ctx, cfg.use_prompts);
        };
        const auto train = inputs(sum_train);
        const auto valid = sum_valid.empty() ? std::vector<model::ModelInput>{} : inputs(sum_valid);
        model::ModelConfig mc = cfg.model;
        mc.vocab_size = vocab.size();
        mc.topical_attention = sum_topical;
        model::TrainConfig tc = cfg.train;
        if (!sum_ckdir.empty()) tc.checkpoint_dir = sum_ckdir;
        model::Transformer m(mc, cfg.seed);
        const auto res = model::train_summarizer(m, train, valid, tc, [](const model::EpochMetrics& e) {
          std::string line = "epoch " + std::to_string(e.epoch) + " train " + std::to_string(e.train_loss);
          if (e.valid_loss) line += " valid " + std::to_string(*e.valid_loss);
          log_line(line);
        });
        json meta = pipeline::provenance(cfg);
        meta["vocab_hash"] = hex64(vocab.hash());
        meta["guidance"] = sum_mode;
        meta["best_epoch"] = res.best_epoch;
        if (!sum_topics.empty()) meta["topics_dir"] = fs::absolute(sum_topics).string();
        m.save(sum_out, meta);
      });
    } else if (*gen.app) {
      auto cfg = gen.resolve();
      stage("generate", [&] {
        cfg.decode.validate();
        json meta;
        const auto m = model::Transformer::load(gen_model, &meta);
        const auto topics = load_topics(gen_topics);
        if (meta.contains("vocab_hash") && meta["vocab_hash"] != hex64(topics.vocab.hash())) {
          throw std::runtime_error("model and --topics use different vocabularies");
        }
        const std::string mode_name = !gen_mode.empty() ? gen_mode : meta.value("guidance", std::string("none"));
        const auto mode = guidance::parse_mode(mode_name);
        if (mode == guidance::Mode::kFfn && gen_ffn.empty()) throw ConfigError("--mode ffn needs --ffn");
        std::optional<guidance::FfnWeights> ffn;
        if (!gen_ffn.empty()) ffn = guidance::FfnWeights::load(gen_ffn);
        const guidance::GuidanceContext ctx{&topics.model, ffn ? &*ffn : nullptr, topics.model.config};
        const auto ex = pipeline::relabel(
            corpus::encode_examples(corpus::read_jsonl(gen_input), topics.vocab, false), topics.label_map);
        const auto inputs = pipeline::build_inputs(ex, mode, ctx, cfg.use_prompts);
        pipeline::write_generated(gen_out, pipeline::generate_all(m, inputs, cfg.decode), inputs, topics.vocab);
        log_line("wrote " + std::to_string(inputs.size()) + " summaries to " + gen_out);
      });
    } else if (*eval.app) {
      auto cfg = eval.resolve();
      stage("evaluate", [&] {
        const auto topics = load_topics(ev_topics);
        auto rep = metrics::evaluate(pipeline::read_generated(ev_gen), corpus::read_jsonl(ev_ref), topics.vocab,
                                     topics.model, topics.model.config, topics.label_map);
        rep.extra = topics.model.extra;
        const auto j = rep.to_json();
        if (ev_out.empty()) {
          std::cout << j.dump(2) << '\n';
        } else {
          pipeline::write_json(ev_out, j);
        }
      });
    } else if (*cmp) {
      stage("compare", [&] {
        const auto a = metrics::MetricReport::from_json(pipeline::read_json(cmp_a));
        const auto b = metrics::MetricReport::from_json(pipeline::read_json(cmp_b));
        const auto delta = metrics::compare_reports(a, b);
        if (cmp_out.empty()) {
          std::cout << delta.dump(2) << '\n';
        } else {
          pipeline::write_json(cmp_out, delta);
        }
      });
    } else if (*pipe) {
      auto cfg = pipeline::load_run_config(pipe_config);
      if (!pipe_out.empty()) cfg.output_dir = pipe_out;
      if (pipe_seed) cfg.set_seed(*pipe_seed);
      cfg.validate();
      const auto res = pipeline::run_pipeline(cfg, pipe_quiet ? std::function<void(const std::string&)>{} : log_line);
      std::cout << res.manifest["comparisons"].dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
