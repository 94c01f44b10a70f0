#include "topicsum/pipeline/run.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "topicsum/hash.hpp"

namespace topicsum::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

StageError::StageError(std::string stage, const std::string& what)
    : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

namespace {

const std::set<std::string> kSections = {"data",  "synth",  "test_fraction", "min_count", "lda",
                                         "select", "ffn",   "model",         "train",     "decode",
                                         "guidance", "use_prompts", "seed",  "output_dir"};

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("config field '" + section + "." + k + "' is not recognized");
  }
}

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (const auto& [k, v] : j.items()) out.insert(k);
  return out;
}

// Runs a section parser, re-throwing json type errors with the section name.
template <class F>
auto section(const json& j, const std::string& name, const json& defaults, F parse) {
  check_keys(j, name, keys_of(defaults));
  try {
    return parse(j);
  } catch (const json::exception& e) {
    throw ConfigError("config section '" + name + "': " + e.what());
  }
}

fs::path resolve(const json& v, const fs::path& base, const std::string& field) {
  if (!v.is_string()) throw ConfigError("config field '" + field + "' must be a path string");
  fs::path p = v.get<std::string>();
  if (p.empty()) throw ConfigError("config field '" + field + "' is empty");
  return p.is_relative() && !base.empty() ? base / p : p;
}

void require_file(const std::optional<fs::path>& p, const std::string& field) {
  if (p && !fs::is_regular_file(*p)) {
    throw ConfigError("config field '" + field + "': no such file: " + p->string());
  }
}

template <class F>
auto run_stage(const std::string& name, const std::function<void(const std::string&)>& log, F body) {
  if (log) log("[" + name + "]");
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kSections.count(k)) throw ConfigError("config field '" + k + "' is not recognized");
  }
  RunConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j["data"];
      check_keys(d, "data", {"train", "test", "stopwords"});
      if (d.contains("train")) c.train_path = resolve(d["train"], base_dir, "data.train");
      if (d.contains("test")) c.test_path = resolve(d["test"], base_dir, "data.test");
      if (d.contains("stopwords")) c.stopwords_path = resolve(d["stopwords"], base_dir, "data.stopwords");
    }
    if (j.contains("synth")) {
      c.synth = section(j["synth"], "synth", pipeline::to_json(corpus::SynthConfig{}), synth_config_from_json);
    }
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.min_count = j.value("min_count", c.min_count);
    if (j.contains("lda")) c.lda = section(j["lda"], "lda", pipeline::to_json(c.lda), lda_config_from_json);
    if (j.contains("select")) {
      check_keys(j["select"], "select", {"candidates"});
      c.select_candidates = j["select"].value("candidates", std::vector<std::size_t>{});
    }
    if (j.contains("ffn")) c.ffn = section(j["ffn"], "ffn", pipeline::to_json(c.ffn), ffn_config_from_json);
    if (j.contains("model")) c.model = section(j["model"], "model", c.model.to_json(), model::ModelConfig::from_json);
    if (j.contains("train")) c.train = section(j["train"], "train", pipeline::to_json(c.train), train_config_from_json);
    if (j.contains("decode")) {
      c.decode = section(j["decode"], "decode", c.decode.to_json(), decode::DecodeConfig::from_json);
    }
    if (j.contains("guidance")) {
      const auto& g = j["guidance"];
      check_keys(g, "guidance", {"train_mode", "test_modes"});
      try {
        if (g.contains("train_mode")) c.train_mode = guidance::parse_mode(g["train_mode"].get<std::string>());
        if (g.contains("test_modes")) {
          c.test_modes.clear();
          for (const auto& m : g["test_modes"]) c.test_modes.push_back(guidance::parse_mode(m.get<std::string>()));
        }
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config section 'guidance': ") + e.what());
      }
    }
    c.use_prompts = j.value("use_prompts", c.use_prompts);
    c.set_seed(j.value("seed", c.seed));
    if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"], base_dir, "output_dir");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  json data = json::object();
  if (train_path) data["train"] = train_path->string();
  if (test_path) data["test"] = test_path->string();
  if (stopwords_path) data["stopwords"] = stopwords_path->string();
  json modes = json::array();
  for (auto m : test_modes) modes.push_back(guidance::to_string(m));
  json j = {{"data", data},
            {"test_fraction", test_fraction},
            {"min_count", min_count},
            {"lda", pipeline::to_json(lda)},
            {"select", {{"candidates", select_candidates}}},
            {"ffn", pipeline::to_json(ffn)},
            {"model", model.to_json()},
            {"train", pipeline::to_json(train)},
            {"decode", decode.to_json()},
            {"guidance", {{"train_mode", guidance::to_string(train_mode)}, {"test_modes", modes}}},
            {"use_prompts", use_prompts},
            {"seed", seed},
            {"output_dir", output_dir.string()}};
  if (synth) j["synth"] = pipeline::to_json(*synth);
  return j;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  lda.seed = s;
  ffn.seed = s;
  train.seed = s;
}

std::uint64_t RunConfig::hash() const {
  auto j = to_json();
  j.erase("output_dir");
  // Datasets enter by content so the hash does not depend on where the files live.
  for (auto& [k, v] : j["data"].items()) {
    const fs::path p = v.get<std::string>();
    v = fs::is_regular_file(p) ? file_hash(p) : std::string("missing");
  }
  return fnv1a(j.dump());
}

void RunConfig::validate() const {
  if (train_path || test_path) {
    if (!train_path) throw ConfigError("config field 'data.train' is required when 'data.test' is set");
    if (!test_path) throw ConfigError("config field 'data.test' is required when 'data.train' is set");
  } else if (!synth) {
    throw ConfigError("config needs 'data.train' and 'data.test' or a 'synth' section");
  }
  require_file(train_path, "data.train");
  require_file(test_path, "data.test");
  require_file(stopwords_path, "data.stopwords");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("config field 'test_fraction' must lie in (0, 1)");
  }
  if (min_count == 0) throw ConfigError("config field 'min_count' must be >= 1");
  auto check = [](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config section '" + name + "': " + e.what());
    }
  };
  if (synth) check("synth", [&] { synth->validate(); });
  check("lda", [&] { lda.validate(); });
  for (auto k : select_candidates) {
    if (k < 2) throw ConfigError("config field 'select.candidates' needs values >= 2");
  }
  check("ffn", [&] { ffn.validate(); });
  check("train", [&] { train.validate(); });
  check("decode", [&] { decode.validate(); });
  if (decode.max_length + 1 > model.max_positions) {
    throw ConfigError("config field 'decode.max_length' (" + std::to_string(decode.max_length) +
                      ") does not fit 'model.max_positions' (" + std::to_string(model.max_positions) + ")");
  }
  if (train_mode == guidance::Mode::kNone) throw ConfigError("config field 'guidance.train_mode' cannot be 'none'");
  if (test_modes.empty()) throw ConfigError("config field 'guidance.test_modes' is empty");
  for (auto m : test_modes) {
    if (m == guidance::Mode::kNone) throw ConfigError("config field 'guidance.test_modes' cannot contain 'none'");
  }
}

corpus::Stopwords RunConfig::stopwords() const {
  return stopwords_path ? corpus::load_stopwords(*stopwords_path) : corpus::default_stopwords();
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j, path.parent_path());
}

json provenance(const RunConfig& cfg) { return {{"config_hash", hex64(cfg.hash())}, {"seed", cfg.seed}}; }

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_generated(const fs::path& path, std::span<const decode::Hypothesis> hyps,
                     std::span<const model::ModelInput> inputs, const corpus::Vocabulary& vocab) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const json j = {{"id", inputs[i].id},
                    {"summary", vocab.decode_text(hyps[i].tokens)},
                    {"logprob", hyps[i].logprob},
                    {"normalized_score", hyps[i].normalized_score}};
    out << j.dump() << '\n';
  }
}

std::vector<corpus::TextExample> read_generated(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<corpus::TextExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      corpus::TextExample ex;
      ex.id = j.at("id").get<std::string>();
      ex.summary = j.at("summary").get<std::string>();
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_labels(const fs::path& path, std::span<const std::size_t> label_map, const json& meta) {
  json j = meta;
  j["label_map"] = std::vector<std::size_t>(label_map.begin(), label_map.end());
  write_json(path, j);
}

std::vector<std::size_t> read_labels(const fs::path& path) {
  const auto j = read_json(path);
  if (!j.contains("label_map")) throw std::runtime_error(path.string() + ": missing 'label_map'");
  return j["label_map"].get<std::vector<std::size_t>>();
}

std::pair<std::vector<corpus::TextExample>, std::vector<corpus::TextExample>> load_corpus(const RunConfig& cfg,
                                                                                           const fs::path& dir) {
  if (cfg.train_path) return {corpus::read_jsonl(*cfg.train_path), corpus::read_jsonl(*cfg.test_path)};
  const auto synth = corpus::synth_corpus(*cfg.synth);
  auto split = corpus::split_by_document(synth, cfg.test_fraction, cfg.synth->seed);
  fs::create_directories(dir / "corpus");
  corpus::write_jsonl(dir / "corpus" / "train.jsonl", split.train);
  corpus::write_jsonl(dir / "corpus" / "test.jsonl", split.test);
  return {std::move(split.train), std::move(split.test)};
}

TopicStage fit_topics(const RunConfig& cfg, const PreparedCorpus& data, json* selection) {
  const auto stopwords = cfg.stopwords();
  const std::size_t n_labels = label_count(data.train);
  if (cfg.select_candidates.empty()) return train_topics(data, cfg.lda, n_labels, stopwords);

  auto sel = lda::select_k(lda_documents(data.train), word_mask(data, stopwords), cfg.select_candidates, cfg.lda);
  if (selection) {
    json table = json::array();
    for (const auto& e : sel.table) {
      json row = {{"k", e.k}, {"ok", e.ok}};
      if (e.ok) {
        row["neg_log_likelihood"] = e.neg_log_likelihood;
      } else {
        row["error"] = e.error;
      }
      table.push_back(row);
    }
    *selection = {{"best_k", sel.best_k}, {"table", table}};
  }
  TopicStage t;
  t.model = std::move(*sel.best_model);
  t.model.vocab_hash = data.vocab.hash();
  if (n_labels > 0) t.label_map = lda::align_topic_labels(t.model, data.train, n_labels, t.model.config);
  return t;
}

namespace {

std::string report_name(guidance::Mode m) { return "topical-" + guidance::to_string(m); }

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const json prov = provenance(cfg);
  json artifacts = json::object();
  auto record = [&](const std::string& name, const fs::path& p) {
    artifacts[name] = {{"path", fs::relative(p, dir).generic_string()}, {"hash", file_hash(p)}};
  };
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  auto split = run_stage(cfg.train_path ? "load-corpus" : "synth-corpus", log, [&] { return load_corpus(cfg, dir); });
  json data_hashes = json::object();
  if (cfg.train_path) {
    data_hashes = {{"train", file_hash(*cfg.train_path)}, {"test", file_hash(*cfg.test_path)}};
  } else {
    record("train_corpus", dir / "corpus" / "train.jsonl");
    record("test_corpus", dir / "corpus" / "test.jsonl");
  }

  const auto data = run_stage("vocab", log, [&] {
    auto d = prepare_corpus(std::move(split.first), std::move(split.second), cfg.min_count);
    if (d.test.empty()) throw std::runtime_error("empty test split");
    d.vocab.save(dir / "vocab.json");
    return d;
  });
  record("vocab", dir / "vocab.json");

  const std::string topic_stage = cfg.select_candidates.empty() ? "train-lda" : "select-topics";
  json selection;
  const auto topics = run_stage(topic_stage, log, [&] {
    auto t = fit_topics(cfg, data, &selection);
    t.model.extra = prov;
    t.model.save(dir / "lda.ckpt");
    write_labels(dir / "labels.json", t.label_map, prov);
    if (!selection.is_null()) write_json(dir / "selection.json", selection);
    return t;
  });
  record("lda", dir / "lda.ckpt");
  record("labels", dir / "labels.json");
  if (!selection.is_null()) record("selection", dir / "selection.json");
  const lda::LdaConfig fold_cfg = topics.model.config;
  const auto train = relabel(data.train, topics.label_map);
  const auto test = relabel(data.test, topics.label_map);

  const auto ffn = run_stage("train-ffn", log, [&] {
    auto w = guidance::init_ffn(data.vocab.size(), cfg.ffn.hidden, cfg.seed);
    const auto rep = guidance::train_ffn(w, guidance::ffn_pairs(train, topics.model, fold_cfg), cfg.ffn);
    say("ffn loss " + std::to_string(rep.epoch_loss.back()) + " (target entropy " +
        std::to_string(rep.target_entropy) + ")");
    w.vocab_hash = data.vocab.hash();
    w.config_hash = cfg.hash();
    w.save(dir / "ffn.ckpt");
    return w;
  });
  record("ffn", dir / "ffn.ckpt");
  const guidance::GuidanceContext ctx{&topics.model, &ffn, fold_cfg};

  model::ModelConfig mc = cfg.model;
  mc.vocab_size = data.vocab.size();
  model::TrainConfig tcfg = cfg.train;
  tcfg.checkpoint_dir.reset();
  auto on_epoch = [&](const model::EpochMetrics& m) {
    say("epoch " + std::to_string(m.epoch) + " train loss " + std::to_string(m.train_loss));
  };

  json losses = json::object();
  auto train_model = [&](const std::string& name, bool topical, guidance::Mode mode) {
    return run_stage("train-summarizer:" + name, log, [&] {
      mc.topical_attention = topical;
      model::Transformer m(mc, cfg.seed);
      model::train_summarizer(m, build_inputs(train, mode, ctx, cfg.use_prompts), {}, tcfg, on_epoch);
      json meta = prov;
      meta["vocab_hash"] = hex64(data.vocab.hash());
      meta["guidance"] = guidance::to_string(mode);
      m.save(dir / (name + ".ckpt"), meta);
      record(name, dir / (name + ".ckpt"));
      losses[name] = model::evaluate_loss(m, build_inputs(test, mode, ctx, cfg.use_prompts));
      return m;
    });
  };
  const auto baseline = train_model("baseline", false, guidance::Mode::kNone);
  const auto topical = train_model("topical", true, cfg.train_mode);

  auto generate = [&](const std::string& name, const model::Transformer& m, guidance::Mode mode) {
    run_stage("generate:" + name, log, [&] {
      const auto inputs = build_inputs(test, mode, ctx, cfg.use_prompts);
      const auto path = dir / "generated" / (name + ".jsonl");
      write_generated(path, generate_all(m, inputs, cfg.decode), inputs, data.vocab);
      record("generated:" + name, path);
      return 0;
    });
  };
  generate("baseline", baseline, guidance::Mode::kNone);
  for (auto mode : cfg.test_modes) generate(report_name(mode), topical, mode);

  PipelineResult result;
  auto evaluate = [&](const std::string& name, const std::string& model_name) {
    return run_stage("evaluate:" + name, log, [&] {
      const auto generated = read_generated(dir / "generated" / (name + ".jsonl"));
      auto rep = metrics::evaluate(generated, data.test_text, data.vocab, topics.model, fold_cfg, topics.label_map);
      rep.extra = prov;
      rep.extra["model"] = name;
      rep.extra["test_loss"] = losses[model_name];
      const auto path = dir / "reports" / (name + ".json");
      write_json(path, rep.to_json());
      record("report:" + name, path);
      return rep;
    });
  };
  result.baseline = evaluate("baseline", "baseline");
  json comparisons = json::object();
  for (auto mode : cfg.test_modes) {
    const auto name = report_name(mode);
    auto rep = evaluate(name, "topical");
    comparisons[name] = run_stage("compare", log, [&] {
      const auto delta = metrics::compare_reports(result.baseline, rep);
      write_json(dir / "reports" / ("compare-" + name + ".json"), delta);
      return delta;
    });
    result.topical.push_back({mode, std::move(rep)});
  }

  json metrics_out = {{"baseline", result.baseline.to_json()}};
  for (const auto& t : result.topical) metrics_out[report_name(t.mode)] = t.report.to_json();
  result.manifest = {{"config", cfg.to_json()},
                     {"config_hash", prov["config_hash"]},
                     {"seeds",
                      {{"run", cfg.seed},
                       {"lda", cfg.lda.seed},
                       {"ffn", cfg.ffn.seed},
                       {"model_init", cfg.seed},
                       {"train_shuffle", cfg.train.seed},
                       {"synth", cfg.synth ? json(cfg.synth->seed) : json(nullptr)}}},
                     {"data_hashes", data_hashes},
                     {"vocab_hash", hex64(data.vocab.hash())},
                     {"test_set_hash", hex64(corpus::dataset_hash(data.test_text))},
                     {"lda_k", topics.model.k},
                     {"label_map", topics.label_map},
                     {"artifacts", artifacts},
                     {"metrics", metrics_out},
                     {"comparisons", comparisons}};
  write_json(dir / "manifest.json", result.manifest);
  return result;
}

}  // namespace topicsum::pipeline
