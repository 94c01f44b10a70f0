#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace topicsum::corpus {

using TokenId = std::size_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kSep = 4;
inline constexpr std::size_t kNumReserved = 5;

inline constexpr bool is_reserved(TokenId id) { return id < kNumReserved; }

// Lowercases, splits on whitespace, and peels leading/trailing ASCII
// punctuation off each chunk into one-character tokens. Inner punctuation
// ("fire-fighters") and digits are kept.
std::vector<std::string> tokenize(std::string_view text);

// Token <-> id map. Ids [0, kNumReserved) are PAD, BOS, EOS, UNK, SEP; the
// remaining ids are dense and ordered by descending corpus count, then
// lexicographically.
class Vocabulary {
 public:
  Vocabulary();

  // Builds from tokenized texts; tokens seen fewer than `min_count` times are
  // left out (they encode to UNK). Throws on an empty corpus or min_count 0.
  static Vocabulary build(std::span<const std::vector<std::string>> texts, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t doc_frequency(TokenId id) const { return doc_freq_.at(id); }
  std::size_t count(TokenId id) const { return counts_.at(id); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<TokenId> encode_text(std::string_view text) const;
  // Reserved ids are dropped unless keep_reserved.
  std::vector<std::string> decode(std::span<const TokenId> ids, bool keep_reserved = false) const;
  std::string decode_text(std::span<const TokenId> ids) const;

  std::uint64_t hash() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void add(std::string token, std::size_t count, std::size_t doc_freq);

  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, TokenId> index_;
};

// Term counts over the vocabulary; reserved ids stay zero.
std::vector<double> bow(std::span<const TokenId> doc, std::size_t vocab_size);

}  // namespace topicsum::corpus
