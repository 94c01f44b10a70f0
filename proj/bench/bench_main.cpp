// Serial vs OpenMP kernels, plus the two hot loops of a run: a Gibbs sweep
// and one beam search over a small model.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "topicsum/corpus/synth.hpp"
#include "topicsum/decode/decode.hpp"
#include "topicsum/kernels.hpp"
#include "topicsum/lda/lda.hpp"
#include "topicsum/model/transformer.hpp"
#include "topicsum/pipeline/experiment.hpp"

using namespace topicsum;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <auto Kernel>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(a, b, out, n, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Kernel>
void bm_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{256};
  const auto in = random_values(rows * cols, 3);
  std::vector<std::uint8_t> keep(rows * cols, 1);
  for (std::size_t i = 0; i < keep.size(); i += 7) keep[i] = 0;
  std::vector<double> out(in.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(Kernel(in, keep, out, rows, cols));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

void bm_gibbs_sweep(benchmark::State& state) {
  corpus::SynthConfig sc;
  sc.k_true = 4;
  sc.n_docs = 200;
  sc.doc_len = 60;
  const auto data = pipeline::prepare_corpus(corpus::synth_corpus(sc).examples, {}, 1);
  const auto docs = pipeline::lda_documents(data.train);
  const auto mask = pipeline::word_mask(data, corpus::default_stopwords());
  lda::LdaConfig cfg;
  cfg.k = static_cast<std::size_t>(state.range(0));
  cfg.iterations = 10;
  cfg.burn_in = 5;
  cfg.lag = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lda::train_gibbs(docs, mask, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.iterations * docs.size() * 60));
}

void bm_beam_search(benchmark::State& state) {
  model::ModelConfig c;
  c.vocab_size = 64;
  c.d_model = 32;
  c.n_heads = 4;
  c.ffn_width = 64;
  c.max_positions = 64;
  c.topical_attention = true;
  const model::Transformer m(c, 1);
  corpus::Example ex;
  for (std::size_t i = 0; i < 40; ++i) ex.source.push_back(corpus::kNumReserved + i % (c.vocab_size - 5));
  guidance::GuidanceVector g;
  g.scores.assign(ex.source.size(), 0.01);
  g.pad.assign(ex.source.size(), 0);
  const auto in = model::make_input(ex, &g, false);
  const decode::TransformerScorer scorer(m, in);
  decode::DecodeConfig cfg;
  cfg.beam_size = static_cast<std::size_t>(state.range(0));
  cfg.min_length = 8;
  cfg.max_length = 16;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode::beam_search(scorer, cfg));
  }
}

}  // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_softmax<kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(64)->Arg(1024);
BENCHMARK(bm_softmax<kernels::parallel::softmax_rows>)->Name("softmax/parallel")->Arg(64)->Arg(1024);
BENCHMARK(bm_gibbs_sweep)->Arg(4)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_beam_search)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
