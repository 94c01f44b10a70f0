// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `acceptance 3 5` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "decode_oracle.hpp"
#include "gradcheck_cases.hpp"
#include "lda_oracle.hpp"
#include "rouge_oracle.hpp"
#include "topicsum/corpus/synth.hpp"
#include "topicsum/decode/decode.hpp"
#include "topicsum/metrics/metrics.hpp"
#include "topicsum/model/attention.hpp"
#include "topicsum/model/transformer.hpp"
#include "topicsum/numerics/gradcheck.hpp"
#include "topicsum/numerics/ops.hpp"
#include "topicsum/pipeline/run.hpp"

#ifndef TOPICSUM_SOURCE_DIR
#error "TOPICSUM_SOURCE_DIR must be defined"
#endif
#ifndef TOPICSUM_WORK_DIR
#error "TOPICSUM_WORK_DIR must be defined"
#endif
#ifndef TOPICSUM_CLI
#error "TOPICSUM_CLI must be defined"
#endif

namespace fs = std::filesystem;
using namespace topicsum;
using numerics::Tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false) {
  return testing::randn(r, c, rng, grad);
}

Tensor row_of(const Tensor& t, std::size_t r) {
  const auto d = t.data();
  return Tensor(1, t.cols(),
                std::vector<double>(d.begin() + static_cast<long>(r * t.cols()),
                                    d.begin() + static_cast<long>((r + 1) * t.cols())));
}

// Topical attention: row sums, the B = A fixed point and the halved query gradient.
Outcome topical_attention_invariants() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int instances = 1000;
  double worst_sum = 0.0, worst_grad = 0.0;
  int fixed_fail = 0, masked_fail = 0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t nq = len(rng), nk = len(rng), dk = len(rng), dv = len(rng);
    Tensor q = random_tensor(nq, dk, rng, true);
    const Tensor k = random_tensor(nk, dk, rng), v = random_tensor(nk, dv, rng), w = random_tensor(nq, dv, rng);
    std::vector<std::uint8_t> keep(nk, 1);
    for (std::size_t j = 0; j < nk; ++j) keep[j] = rng() % 4 == 0 ? 0 : 1;
    keep[rng() % nk] = 1;
    std::vector<double> scores(nk);
    for (auto& s : scores) s = unit(rng);
    const Tensor b = model::guidance_distribution(scores, keep);

    const Tensor a = model::attention_weights(q, k, keep);
    const Tensor mixed = model::mix_guidance(a, b);
    for (std::size_t r = 0; r < nq; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        s += mixed(r, j);
        if (!keep[j] && mixed(r, j) != 0.0) ++masked_fail;
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }

    // With B set to the query's own attention row the output is unchanged.
    const std::size_t r = rng() % nq;
    const Tensor qr = row_of(q, r);
    const Tensor ar = model::attention_weights(qr, k, keep);
    const Tensor plain = model::cross_attention(qr, k, v, keep);
    const Tensor topical = model::topical_cross_attention(qr, k, v, ar, keep);
    const Tensor fixed = model::mix_guidance(ar, ar);
    for (std::size_t j = 0; j < nk; ++j) fixed_fail += fixed(0, j) != ar(0, j);
    for (std::size_t i = 0; i < plain.size(); ++i) fixed_fail += plain.data()[i] != topical.data()[i];

    numerics::backward(numerics::sum(numerics::mul(model::cross_attention(q, k, v, keep), w)));
    const std::vector<double> g_plain(q.grad().begin(), q.grad().end());
    q.zero_grad();
    numerics::backward(numerics::sum(numerics::mul(model::topical_cross_attention(q, k, v, b, keep), w)));
    for (std::size_t i = 0; i < g_plain.size(); ++i) {
      worst_grad = std::max(worst_grad, std::abs(q.grad()[i] - 0.5 * g_plain[i]));
    }
  }
  Outcome o;
  o.pass = worst_sum <= 1e-9 && fixed_fail == 0 && masked_fail == 0 && worst_grad <= 1e-10;
  o.detail = std::to_string(instances) + " instances; max |row sum - 1| " + fmt(worst_sum) + ", fixed-point mismatches " +
             std::to_string(fixed_fail) + ", masked leaks " + std::to_string(masked_fail) +
             ", max |dQ_topical - dQ/2| " + fmt(worst_grad);
  return o;
}

// Finite differences on every primitive and on a full two-layer model.
Outcome autodiff_soundness() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t coords = 0;
  for (auto& cs : testing::primitive_grad_cases(7)) {
    const auto r = numerics::finite_diff_check(cs.loss, cs.params, 1e-5);
    coords += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = cs.name;
    }
  }
  const std::size_t n_primitives = testing::primitive_grad_cases(7).size();
  for (bool topical : {false, true}) {
    model::ModelConfig c;
    c.vocab_size = 14;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_encoder_layers = 2;
    c.n_decoder_layers = 2;
    c.ffn_width = 32;
    c.max_positions = 16;
    c.topical_attention = topical;
    model::Transformer m(c, 11);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> tok(corpus::kNumReserved, c.vocab_size - 1);
    corpus::Example ex;
    ex.id = "g";
    for (int i = 0; i < 6; ++i) ex.source.push_back(tok(rng));
    ex.source.push_back(corpus::kPad);
    for (int i = 0; i < 4; ++i) ex.summary.push_back(tok(rng));
    guidance::GuidanceVector g;
    g.pad.assign(ex.source.size(), 0);
    g.pad.back() = 1;
    for (std::size_t i = 0; i < ex.source.size(); ++i) g.scores.push_back(i + 1 == ex.source.size() ? 0.0 : 0.05 * i);
    const auto in = model::make_input(ex, &g, false);
    auto params = m.parameters();
    const auto r = numerics::finite_diff_check([&] { return m.forward(in).loss; }, params, 1e-5);
    coords += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = topical ? "topical model" : "plain model";
    }
  }
  Outcome o;
  o.pass = worst < 1e-4;
  o.detail = std::to_string(n_primitives) + " primitives + 2 full models, " + std::to_string(coords) +
             " coordinates; max relative error " + fmt(worst) + " (" + worst_name + ")";
  return o;
}

// Gibbs posterior means against exact enumeration over all assignments.
Outcome lda_oracle_equivalence() {
  constexpr corpus::TokenId A = 5, B = 6, C = 7, D = 8;
  std::vector<std::uint8_t> mask(corpus::kNumReserved + 4, 1);
  std::fill(mask.begin(), mask.begin() + corpus::kNumReserved, 0);
  const std::vector<std::vector<lda::Document>> instances = {
      {{A, B, A}, {C, D, C, B}},
      {{A, A, B}, {B, C}, {C, D, D}},
      {{A, B, A, C}, {C, D, D, B}},
  };
  double worst = 0.0;
  int runs = 0;
  for (const auto& docs : instances) {
    const auto exact = testing::exact_posterior_mean(docs, mask, 2, 0.5, 0.5);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      lda::LdaConfig cfg;
      cfg.k = 2;
      cfg.alpha = 0.5;
      cfg.eta = 0.5;
      cfg.iterations = 20000;
      cfg.burn_in = 1000;
      cfg.lag = 1;
      cfg.seed = seed;
      std::vector<lda::GibbsSample> samples;
      lda::GibbsOptions opts;
      opts.samples = &samples;
      lda::train_gibbs(docs, mask, cfg, opts);
      const auto est = testing::canonical_gibbs_mean(samples, 2);
      for (std::size_t i = 0; i < exact.theta.size(); ++i) worst = std::max(worst, std::abs(est.theta[i] - exact.theta[i]));
      for (std::size_t i = 0; i < exact.phi.size(); ++i) worst = std::max(worst, std::abs(est.phi[i] - exact.phi[i]));
      ++runs;
    }
  }
  Outcome o;
  o.pass = worst <= 0.05;
  o.detail = std::to_string(instances.size()) + " instances (<= 8 tokens, K=2) x 5 seeds; max |gibbs - exact| " +
             fmt(worst);
  return o;
}

// K selection on corpora generated with three topics.
Outcome model_selection_recovery() {
  int hits = 0;
  std::string picks;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    corpus::SynthConfig sc;
    sc.k_true = 3;
    sc.vocab_per_topic = 6;
    sc.doc_len = 60;
    sc.n_docs = 200;
    sc.mixture_concentration = 1.0;
    sc.seed = seed;
    const auto synth = corpus::synth_corpus(sc);
    const auto data = pipeline::prepare_corpus(synth.examples, {}, 1);
    lda::LdaConfig cfg;
    cfg.alpha = 0.3;
    cfg.iterations = 500;
    cfg.burn_in = 250;
    cfg.lag = 10;
    cfg.seed = seed;
    const std::vector<std::size_t> candidates = {2, 3, 5};
    const auto sel = lda::select_k(pipeline::lda_documents(data.train),
                                   pipeline::word_mask(data, corpus::default_stopwords()), candidates, cfg);
    hits += sel.best_k == 3;
    picks += (picks.empty() ? "" : " ") + std::to_string(sel.best_k);
  }
  Outcome o;
  o.pass = hits >= 8;
  o.detail = "K=3 chosen in " + std::to_string(hits) + "/10 seeds (picks: " + picks + ")";
  return o;
}

// Baseline vs topical models on the bundled corpus through the full pipeline.
Outcome controlled_summarization_trend() {
  const fs::path config = fs::path(TOPICSUM_SOURCE_DIR) / "configs" / "quickstart.json";
  int gap_hits = 0, ctrl_ge_ffn = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = pipeline::load_run_config(config);
    cfg.set_seed(seed);
    cfg.output_dir = fs::path(TOPICSUM_WORK_DIR) / ("trend-seed" + std::to_string(seed));
    const auto res = pipeline::run_pipeline(cfg);
    double ctrl = -1.0, ffn = -1.0;
    for (const auto& t : res.topical) {
      if (t.mode == guidance::Mode::kControlled) ctrl = t.report.topic_focus;
      if (t.mode == guidance::Mode::kFfn) ffn = t.report.topic_focus;
    }
    const double base = res.baseline.topic_focus;
    gap_hits += ctrl - base >= 0.05;
    ctrl_ge_ffn += ctrl >= ffn;
    rows += "\n    seed " + std::to_string(seed) + ": baseline " + fmt(base) + ", topical/controlled " + fmt(ctrl) +
            ", topical/ffn " + fmt(ffn);
  }
  Outcome o;
  o.pass = gap_hits >= 4 && ctrl_ge_ffn == 5;
  o.detail = "topic-focus gain >= 0.05 in " + std::to_string(gap_hits) + "/5 seeds, controlled >= ffn in " +
             std::to_string(ctrl_ge_ffn) + "/5" + rows;
  return o;
}

// ROUGE against brute-force overlap and subsequence enumeration.
Outcome rouge_exactness() {
  int mismatches = 0;
  metrics::Interner in;
  const auto cand = in.ids("the cat sat"), ref = in.ids("the cat ran");
  const auto s = metrics::rouge(cand, ref);
  const bool hand = s.rouge1.f1 == 2.0 / 3.0 && s.rouge2.f1 == 1.0 / 2.0 && s.rougeL.f1 == 2.0 / 3.0;

  std::mt19937_64 rng(99);
  auto seq = [&] {
    std::vector<corpus::TokenId> v(rng() % 13);
    for (auto& t : v) t = rng() % 6;
    return v;
  };
  const int pairs = 1000;
  for (int t = 0; t < pairs; ++t) {
    const auto c = seq(), r = seq();
    for (std::size_t n : {1, 2}) {
      const auto e = metrics::rouge_n(c, r, n);
      if (c.size() < n || r.size() < n) {
        mismatches += !e.degenerate;
        continue;
      }
      const double ov = static_cast<double>(testing::brute_overlap(c, r, n));
      const double nc = static_cast<double>(c.size() - n + 1), nr = static_cast<double>(r.size() - n + 1);
      mismatches += e.precision != ov / nc;
      mismatches += e.recall != ov / nr;
      mismatches += e.f1 != (ov == 0.0 ? 0.0 : 2.0 * ov / (nc + nr));
    }
    if (c.empty() || r.empty()) continue;
    const double l = static_cast<double>(testing::brute_lcs(c, r));
    const auto e = metrics::rouge_l(c, r);
    mismatches += e.precision != l / static_cast<double>(c.size());
    mismatches += e.recall != l / static_cast<double>(r.size());
    mismatches += e.f1 != (l == 0.0 ? 0.0 : 2.0 * l / static_cast<double>(c.size() + r.size()));
  }
  Outcome o;
  o.pass = hand && mismatches == 0;
  o.detail = "hand example R1/R2/RL = " + fmt(s.rouge1.f1, 17) + " / " + fmt(s.rouge2.f1, 17) + " / " +
             fmt(s.rougeL.f1, 17) + (hand ? " (exact)" : " (NOT exact)") + "; " + std::to_string(pairs) +
             " random pairs, " + std::to_string(mismatches) + " mismatches";
  return o;
}

// Beam search constraints, beam-1 vs greedy, and toy models vs exhaustive search.
Outcome decode_constraints() {
  std::mt19937_64 rng(31);
  int bad_len = 0, repeats = 0, greedy_diff = 0, oracle_diff = 0, oracle_runs = 0;
  const decode::DecodeConfig defaults;
  for (int t = 0; t < 100; ++t) {
    const std::size_t V = 20 + rng() % 40;
    const auto scorer = testing::random_markov(V, rng() % V, 3.0, rng);
    const auto h = decode::beam_search(scorer, defaults);
    bad_len += h.tokens.size() < 56 || h.tokens.size() > 180;
    repeats += testing::has_repeated_ngram(h.tokens, 3);
    auto one = defaults;
    one.beam_size = 1;
    const auto b1 = decode::beam_search(scorer, one);
    const auto g = decode::greedy_decode(scorer, one);
    greedy_diff += b1.tokens != g.tokens || b1.logprob != g.logprob;
  }

  auto compare = [&](const decode::StepScorer& scorer, const decode::DecodeConfig& cfg) {
    const auto oracle = testing::exhaustive_best(scorer, cfg);
    if (!oracle.found) return;
    ++oracle_runs;
    const auto got = decode::beam_search(scorer, cfg);
    oracle_diff += got.tokens != oracle.tokens ||
                   std::abs(got.normalized_score - oracle.score) > 1e-12 * std::max(1.0, std::abs(oracle.score));
  };
  // Hand toy: token 0 is locally attractive, token 1 leads to a confident EOS (2).
  const decode::MarkovScorer hand({{1.0, 0.2, -1.0}, {-0.5, 0.0, 1.5}, {0.0, 0.0, 0.0}, {0.8, 0.6, -2.0}}, 2);
  for (double p : {0.0, 1.0, 2.0}) {
    for (bool early : {false, true}) {
      decode::DecodeConfig cfg;
      cfg.beam_size = 3;
      cfg.min_length = 1;
      cfg.max_length = 3;
      cfg.no_repeat_ngram = 0;
      cfg.length_penalty = p;
      cfg.early_stopping = early;
      compare(hand, cfg);
    }
  }
  for (int t = 0; t < 300; ++t) {
    const std::size_t V = 3;
    const auto scorer = testing::random_markov(V, rng() % V, 1.5, rng);
    decode::DecodeConfig cfg;
    cfg.max_length = 1 + rng() % 4;
    cfg.min_length = 1 + rng() % cfg.max_length;
    cfg.no_repeat_ngram = rng() % 3;
    cfg.length_penalty = static_cast<double>(rng() % 3);
    cfg.early_stopping = rng() % 2 == 0;
    cfg.beam_size = 81;  // |V|^4
    compare(scorer, cfg);
  }
  Outcome o;
  o.pass = bad_len == 0 && repeats == 0 && greedy_diff == 0 && oracle_diff == 0;
  o.detail = "100 decodes: " + std::to_string(bad_len) + " out of [56, 180], " + std::to_string(repeats) +
             " with a repeated trigram, " + std::to_string(greedy_diff) + " beam-1/greedy differences; " +
             std::to_string(oracle_runs) + " toy models, " + std::to_string(oracle_diff) + " differ from exhaustive search";
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Two CLI runs of the quickstart config produce identical report bytes.
Outcome reproducibility() {
  const fs::path config = fs::path(TOPICSUM_SOURCE_DIR) / "configs" / "quickstart.json";
  const fs::path work = fs::path(TOPICSUM_WORK_DIR);
  std::vector<fs::path> dirs = {work / "repro-a", work / "repro-b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    const std::string cmd = std::string("\"") + TOPICSUM_CLI + "\" pipeline -q --config \"" + config.string() +
                            "\" --out \"" + d.string() + "\" > \"" + (work / (d.filename().string() + ".log")).string() +
                            "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "pipeline exited with status " + std::to_string(rc) + " (" + d.string() + ")"};
  }
  std::set<std::string> names;
  for (const auto& d : dirs) {
    for (const auto& e : fs::directory_iterator(d / "reports")) names.insert(e.path().filename().string());
  }
  int differing = 0;
  std::string which;
  for (const auto& n : names) {
    const auto a = dirs[0] / "reports" / n, b = dirs[1] / "reports" / n;
    if (!fs::exists(a) || !fs::exists(b) || read_file(a) != read_file(b)) {
      ++differing;
      which += " " + n;
    }
  }
  Outcome o;
  o.pass = !names.empty() && differing == 0;
  o.detail = std::to_string(names.size()) + " report files compared, " + std::to_string(differing) + " differ" + which;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "topical attention invariants", 30, topical_attention_invariants},
      {2, "autodiff soundness", 60, autodiff_soundness},
      {3, "LDA oracle equivalence", 60, lda_oracle_equivalence},
      {4, "model selection recovery", 300, model_selection_recovery},
      {5, "controlled summarization trend", 600, controlled_summarization_trend},
      {6, "ROUGE exactness", 10, rouge_exactness},
      {7, "decode constraints", 60, decode_constraints},
      {8, "reproducibility", 0, reproducibility},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  fs::create_directories(TOPICSUM_WORK_DIR);

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt(secs, 3) + " s";
    if (c.budget_s > 0) {
      timing += " (budget " + fmt(c.budget_s, 4) + " s)";
      if (secs > c.budget_s) {
        o.pass = false;
        o.detail += "; over the runtime budget";
      }
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail
              << "  [" << timing << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
