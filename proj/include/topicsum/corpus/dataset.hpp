#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topicsum/corpus/vocabulary.hpp"

namespace topicsum::corpus {

struct TopicWeight {
  std::size_t topic = 0;
  double weight = 0.0;
  bool operator==(const TopicWeight&) const = default;
};

// One JSONL record before tokenization:
//   {"id": "...", "source": "...", "summary": "...",
//    "target_topics": [[topic, weight], ...],   (optional)
//    "topic_prompt": "..."}                     (optional)
struct TextExample {
  std::string id;
  std::string source;
  std::string summary;
  std::vector<TopicWeight> target_topics;
  std::optional<std::string> topic_prompt;
};

struct Example {
  std::string id;
  std::vector<TokenId> source;
  std::vector<TokenId> summary;
  std::vector<TopicWeight> target_topics;
  std::vector<TokenId> topic_prompt;

  bool has_targets() const { return !target_topics.empty(); }
};

nlohmann::json to_json(const TextExample& ex);
TextExample text_example_from_json(const nlohmann::json& j);

// Throws std::runtime_error naming the line on malformed input.
std::vector<TextExample> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const TextExample> examples);

// Token sequences of every text field, for vocabulary building.
std::vector<std::vector<std::string>> tokenized_texts(std::span<const TextExample> examples);

// Validates (non-empty source, non-negative weights) and encodes.
Example encode_example(const TextExample& ex, const Vocabulary& vocab, bool require_summary = true);
std::vector<Example> encode_examples(std::span<const TextExample> examples, const Vocabulary& vocab,
                                     bool require_summary = true);

// Fingerprint of a reference set: ids plus summaries, in order.
std::uint64_t dataset_hash(std::span<const TextExample> examples);

using Stopwords = std::unordered_set<std::string>;

// The built-in 50-word English list.
const Stopwords& default_stopwords();
// Newline-separated tokens; blank lines and lines starting with '#' skipped.
Stopwords load_stopwords(const std::filesystem::path& path);

}  // namespace topicsum::corpus
