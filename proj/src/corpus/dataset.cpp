#include "topicsum/corpus/dataset.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "topicsum/hash.hpp"

namespace topicsum::corpus {

nlohmann::json to_json(const TextExample& ex) {
  nlohmann::json j;
  j["id"] = ex.id;
  j["source"] = ex.source;
  j["summary"] = ex.summary;
  if (!ex.target_topics.empty()) {
    j["target_topics"] = nlohmann::json::array();
    for (const auto& tw : ex.target_topics) j["target_topics"].push_back({tw.topic, tw.weight});
  }
  if (ex.topic_prompt) j["topic_prompt"] = *ex.topic_prompt;
  return j;
}

TextExample text_example_from_json(const nlohmann::json& j) {
  TextExample ex;
  ex.id = j.at("id").get<std::string>();
  ex.source = j.at("source").get<std::string>();
  ex.summary = j.value("summary", std::string{});
  if (j.contains("target_topics") && !j["target_topics"].is_null()) {
    for (const auto& e : j["target_topics"]) {
      TopicWeight tw;
      if (e.is_array()) {
        tw.topic = e.at(0).get<std::size_t>();
        tw.weight = e.at(1).get<double>();
      } else {
        tw.topic = e.at("topic").get<std::size_t>();
        tw.weight = e.value("weight", 1.0);
      }
      ex.target_topics.push_back(tw);
    }
  }
  if (j.contains("topic_prompt") && !j["topic_prompt"].is_null()) {
    ex.topic_prompt = j["topic_prompt"].get<std::string>();
  }
  return ex;
}

std::vector<TextExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<TextExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(text_example_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const TextExample> examples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

std::vector<std::vector<std::string>> tokenized_texts(std::span<const TextExample> examples) {
  std::vector<std::vector<std::string>> texts;
  for (const auto& ex : examples) {
    texts.push_back(tokenize(ex.source));
    if (!ex.summary.empty()) texts.push_back(tokenize(ex.summary));
    if (ex.topic_prompt) texts.push_back(tokenize(*ex.topic_prompt));
  }
  return texts;
}

Example encode_example(const TextExample& ex, const Vocabulary& vocab, bool require_summary) {
  Example out;
  out.id = ex.id;
  out.source = vocab.encode_text(ex.source);
  out.summary = vocab.encode_text(ex.summary);
  if (out.source.empty()) throw std::invalid_argument("example '" + ex.id + "' has an empty source");
  if (require_summary && out.summary.empty()) {
    throw std::invalid_argument("example '" + ex.id + "' has an empty summary");
  }
  for (const auto& tw : ex.target_topics) {
    if (tw.weight < 0.0) throw std::invalid_argument("example '" + ex.id + "' has a negative topic weight");
  }
  out.target_topics = ex.target_topics;
  if (ex.topic_prompt) out.topic_prompt = vocab.encode_text(*ex.topic_prompt);
  return out;
}

std::vector<Example> encode_examples(std::span<const TextExample> examples, const Vocabulary& vocab,
                                     bool require_summary) {
  std::vector<Example> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(ex, vocab, require_summary));
  return out;
}

std::uint64_t dataset_hash(std::span<const TextExample> examples) {
  std::uint64_t h = fnv1a("dataset");
  for (const auto& ex : examples) {
    h = fnv1a(ex.id, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
    h = fnv1a(ex.summary, h);
    h = fnv1a(std::string_view("\x1e", 1), h);
  }
  return h;
}

const Stopwords& default_stopwords() {
  static const Stopwords kList = {
      "the",  "a",    "an",   "and",  "or",   "but",  "of",   "to",   "in",   "on",
      "at",   "by",   "for",  "with", "from", "as",   "is",   "are",  "was",  "were",
      "be",   "been", "has",  "have", "had",  "it",   "its",  "this", "that", "these",
      "those", "he",  "she",  "they", "we",   "you",  "i",    "his",  "her",  "their",
      "not",  "no",   "so",   "if",   "than", "then", "there", "which", "who", "will"};
  return kList;
}

Stopwords load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword list " + path.string());
  Stopwords out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::string word = line.substr(b, e - b + 1);
    for (auto& c : word) {
      if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    out.insert(std::move(word));
  }
  return out;
}

}  // namespace topicsum::corpus
