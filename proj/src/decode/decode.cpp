#include "topicsum/decode/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace topicsum::decode {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("decode: beam_size must be >= 1");
  if (min_length < 1 || min_length > max_length) {
    throw std::invalid_argument("decode: need 0 < min_length <= max_length, got min " + std::to_string(min_length) +
                                ", max " + std::to_string(max_length));
  }
  if (!std::isfinite(length_penalty)) throw std::invalid_argument("decode: length_penalty must be finite");
}

nlohmann::json DecodeConfig::to_json() const {
  return {{"beam_size", beam_size},           {"length_penalty", length_penalty},
          {"max_length", max_length},         {"min_length", min_length},
          {"no_repeat_ngram", no_repeat_ngram}, {"early_stopping", early_stopping}};
}

DecodeConfig DecodeConfig::from_json(const nlohmann::json& j) {
  DecodeConfig c;
  c.beam_size = j.value("beam_size", c.beam_size);
  c.length_penalty = j.value("length_penalty", c.length_penalty);
  c.max_length = j.value("max_length", c.max_length);
  c.min_length = j.value("min_length", c.min_length);
  c.no_repeat_ngram = j.value("no_repeat_ngram", c.no_repeat_ngram);
  c.early_stopping = j.value("early_stopping", c.early_stopping);
  return c;
}

double length_normalized_score(double logprob, std::size_t length, double p) {
  if (length == 0) throw std::invalid_argument("length_normalized_score: length must be >= 1");
  return logprob / std::pow(static_cast<double>(length), p);
}

bool creates_repeat(const std::vector<TokenId>& tokens, TokenId next, std::size_t n) {
  if (n == 0 || tokens.size() + 1 < n) return false;
  if (n == 1) return std::find(tokens.begin(), tokens.end(), next) != tokens.end();
  const std::size_t tail = tokens.size() - (n - 1);  // start of the new n-gram
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    if (tokens[i + n - 1] != next) continue;
    if (std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n - 1),
                   tokens.begin() + static_cast<std::ptrdiff_t>(tail))) {
      return true;
    }
  }
  return false;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool allowed(const std::vector<TokenId>& tokens, TokenId t, double lp, TokenId eos, const DecodeConfig& cfg) {
  if (lp == kNegInf || std::isnan(lp)) return false;
  if (t == eos) return tokens.size() >= cfg.min_length;
  return tokens.size() < cfg.max_length && !creates_repeat(tokens, t, cfg.no_repeat_ngram);
}

Hypothesis finish(std::vector<TokenId> tokens, double logprob, bool forced, double p) {
  Hypothesis h;
  h.normalized_score = length_normalized_score(logprob, tokens.size() + 1, p);
  h.tokens = std::move(tokens);
  h.logprob = logprob;
  h.finished = true;
  h.forced_eos = forced;
  return h;
}

// Better normalized score first; ties go to the lexicographically lower sequence.
bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.normalized_score != b.normalized_score) return a.normalized_score > b.normalized_score;
  return a.tokens < b.tokens;
}

struct Live {
  std::vector<TokenId> tokens;
  double logprob = 0.0;
  std::shared_ptr<const ScorerState> state;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double logprob;
};

}  // namespace

Hypothesis beam_search(const StepScorer& scorer, const DecodeConfig& cfg) {
  cfg.validate();
  const TokenId eos = scorer.eos();
  const std::size_t V = scorer.vocab_size();
  std::vector<Live> live;
  live.push_back({{}, 0.0, scorer.initial()});
  std::vector<Hypothesis> finished;

  auto add_finished = [&](Hypothesis h) {
    finished.push_back(std::move(h));
    std::sort(finished.begin(), finished.end(), better_finished);
    if (finished.size() > cfg.beam_size) finished.resize(cfg.beam_size);
  };

  while (!live.empty()) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lps = scorer.log_probs(*live[i].state);
      if (lps.size() != V) throw std::logic_error("decode: scorer returned a wrong-sized distribution");
      bool any = false;
      for (TokenId t = 0; t < V; ++t) {
        if (!allowed(live[i].tokens, t, lps[t], eos, cfg)) continue;
        cands.push_back({i, t, live[i].logprob + lps[t]});
        any = true;
      }
      if (!any) add_finished(finish(live[i].tokens, live[i].logprob + lps[eos], true, cfg.length_penalty));
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      // Same-length prefixes: compare the parent sequence, then the new token.
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    });
    std::vector<Live> next;
    for (std::size_t rank = 0; rank < cands.size(); ++rank) {
      const auto& c = cands[rank];
      const auto& parent = live[c.parent];
      if (c.token == eos) {
        if (rank < cfg.beam_size) add_finished(finish(parent.tokens, c.logprob, false, cfg.length_penalty));
      } else if (next.size() < cfg.beam_size) {
        Live h;
        h.tokens = parent.tokens;
        h.tokens.push_back(c.token);
        h.logprob = c.logprob;
        h.state = scorer.advance(*parent.state, c.token);
        next.push_back(std::move(h));
      }
      if (next.size() >= cfg.beam_size && rank + 1 >= cfg.beam_size) break;
    }
    live = std::move(next);
    if (cfg.early_stopping && finished.size() >= cfg.beam_size) break;
  }
  if (finished.empty()) throw std::logic_error("decode: search ended without a finished hypothesis");
  return finished.front();
}

Hypothesis greedy_decode(const StepScorer& scorer, const DecodeConfig& cfg) {
  cfg.validate();
  const TokenId eos = scorer.eos();
  std::vector<TokenId> tokens;
  double logprob = 0.0;
  auto state = scorer.initial();
  while (true) {
    const auto lps = scorer.log_probs(*state);
    TokenId best = 0;
    bool any = false;
    for (TokenId t = 0; t < lps.size(); ++t) {
      if (!allowed(tokens, t, lps[t], eos, cfg)) continue;
      if (!any || lps[t] > lps[best]) best = t;
      any = true;
    }
    if (!any) return finish(std::move(tokens), logprob + lps[eos], true, cfg.length_penalty);
    logprob += lps[best];
    if (best == eos) return finish(std::move(tokens), logprob, false, cfg.length_penalty);
    tokens.push_back(best);
    state = scorer.advance(*state, best);
  }
}

namespace {

struct MarkovState : ScorerState {
  std::size_t row;
};

std::vector<double> log_softmax(const std::vector<double>& x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

}  // namespace

MarkovScorer::MarkovScorer(std::vector<std::vector<double>> logits, TokenId eos) : vocab_(logits.size() - 1), eos_(eos) {
  if (logits.size() < 2) throw std::invalid_argument("MarkovScorer: need at least one token and the BOS row");
  if (eos >= vocab_) throw std::invalid_argument("MarkovScorer: eos out of range");
  for (const auto& row : logits) {
    if (row.size() != vocab_) throw std::invalid_argument("MarkovScorer: every row needs |V| logits");
    log_probs_.push_back(log_softmax(row));
  }
}

std::shared_ptr<const ScorerState> MarkovScorer::initial() const {
  auto s = std::make_shared<MarkovState>();
  s->row = vocab_;
  return s;
}

std::vector<double> MarkovScorer::log_probs(const ScorerState& s) const {
  return log_probs_[static_cast<const MarkovState&>(s).row];
}

std::shared_ptr<const ScorerState> MarkovScorer::advance(const ScorerState&, TokenId token) const {
  auto s = std::make_shared<MarkovState>();
  s->row = token;
  return s;
}

namespace {

struct TransformerState : ScorerState {
  model::DecodeCache cache;
  std::vector<double> next;
};

void ban_reserved(std::vector<double>& lp) {
  for (TokenId t : {corpus::kPad, corpus::kBos, corpus::kSep}) lp[t] = kNegInf;
}

}  // namespace

TransformerScorer::TransformerScorer(const model::Transformer& m, const model::ModelInput& in)
    : model_(&m), stepper_(m, in) {}

std::shared_ptr<const ScorerState> TransformerScorer::initial() const {
  auto s = std::make_shared<TransformerState>();
  s->cache = stepper_.start();
  s->next = stepper_.step(s->cache, corpus::kBos);
  ban_reserved(s->next);
  return s;
}

std::vector<double> TransformerScorer::log_probs(const ScorerState& s) const {
  return static_cast<const TransformerState&>(s).next;
}

std::shared_ptr<const ScorerState> TransformerScorer::advance(const ScorerState& s, TokenId token) const {
  auto out = std::make_shared<TransformerState>();
  out->cache = static_cast<const TransformerState&>(s).cache;
  out->next = stepper_.step(out->cache, token);
  ban_reserved(out->next);
  return out;
}

Hypothesis generate(const model::Transformer& m, const model::ModelInput& in, const DecodeConfig& cfg) {
  if (cfg.max_length + 1 > m.config().max_positions) {
    throw std::invalid_argument("decode: max_length " + std::to_string(cfg.max_length) +
                                " does not fit max_positions " + std::to_string(m.config().max_positions));
  }
  return beam_search(TransformerScorer(m, in), cfg);
}

}  // namespace topicsum::decode
