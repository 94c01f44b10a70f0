#include "topicsum/corpus/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "topicsum/hash.hpp"

namespace topicsum {

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace topicsum

namespace topicsum::corpus {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c) != 0; }

const char* const kReservedTokens[kNumReserved] = {"<pad>", "<s>", "</s>", "<unk>", "<sep>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view chunk = text.substr(i, j - i);
    i = j;

    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && is_punct(static_cast<unsigned char>(chunk[lo]))) ++lo;
    while (hi > lo && is_punct(static_cast<unsigned char>(chunk[hi - 1]))) --hi;
    for (std::size_t k = 0; k < lo; ++k) out.emplace_back(1, chunk[k]);
    if (hi > lo) {
      std::string word(chunk.substr(lo, hi - lo));
      for (auto& c : word) {
        if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      out.push_back(std::move(word));
    }
    for (std::size_t k = hi; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t, 0, 0);
}

void Vocabulary::add(std::string token, std::size_t count, std::size_t doc_freq) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
  doc_freq_.push_back(doc_freq);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> texts, std::size_t min_count) {
  if (min_count == 0) throw std::invalid_argument("build_vocab: min_count must be >= 1");
  std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // count, doc freq
  std::size_t total = 0;
  for (const auto& text : texts) {
    std::set<std::string_view> seen;
    for (const auto& tok : text) {
      auto& s = stats[tok];
      ++s.first;
      if (seen.insert(tok).second) ++s.second;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("build_vocab: empty corpus");

  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> kept;
  for (auto& [tok, s] : stats) {
    bool clash = false;
    for (const char* r : kReservedTokens) clash = clash || tok == r;
    if (!clash && s.first >= min_count) kept.emplace_back(tok, s);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second.first > b.second.first; });
  Vocabulary v;
  for (auto& [tok, s] : kept) v.add(tok, s.first, s.second);
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id) + " out of vocabulary");
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Vocabulary::encode_text(std::string_view text) const {
  const auto toks = tokenize(text);
  return encode(toks);
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids, bool keep_reserved) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (!keep_reserved && is_reserved(id)) continue;
    out.push_back(token(id));
  }
  return out;
}

std::string Vocabulary::decode_text(std::span<const TokenId> ids) const {
  std::string out;
  for (const auto& t : decode(ids)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return h;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["hash"] = hex64(hash());
  j["tokens"] = nlohmann::json::array();
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) {
    j["tokens"].push_back({tokens_[i], counts_[i], doc_freq_[i]});
  }
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  for (const auto& e : j.at("tokens")) {
    v.add(e.at(0).get<std::string>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>());
  }
  if (j.contains("hash") && j["hash"].get<std::string>() != hex64(v.hash())) {
    throw std::runtime_error("vocabulary hash mismatch; file is corrupt or was edited");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << to_json().dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary " + path.string());
  return from_json(nlohmann::json::parse(in));
}

std::vector<double> bow(std::span<const TokenId> doc, std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  for (auto id : doc) {
    if (is_reserved(id)) continue;
    if (id >= vocab_size) throw std::out_of_range("bow: token id " + std::to_string(id) + " >= |V|");
    counts[id] += 1.0;
  }
  return counts;
}

}  // namespace topicsum::corpus
