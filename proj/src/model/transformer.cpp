#include "topicsum/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "topicsum/model/attention.hpp"
#include "topicsum/numerics/ops.hpp"

namespace topicsum::model {

namespace ops = numerics;

bool ModelConfig::topical_at(std::size_t layer, std::size_t head) const {
  if (!topical_attention) return false;
  const bool layer_ok =
      topical_layers.empty() || std::find(topical_layers.begin(), topical_layers.end(), layer) != topical_layers.end();
  const bool head_ok =
      topical_heads.empty() || std::find(topical_heads.begin(), topical_heads.end(), head) != topical_heads.end();
  return layer_ok && head_ok;
}

void ModelConfig::validate() const {
  if (vocab_size <= corpus::kNumReserved) throw std::invalid_argument("model: vocab_size too small");
  if (d_model == 0 || n_heads == 0 || ffn_width == 0 || max_positions == 0) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
  if (n_encoder_layers == 0 || n_decoder_layers == 0) throw std::invalid_argument("model: need at least one layer");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                                std::to_string(n_heads));
  }
  for (auto l : topical_layers) {
    if (l >= n_decoder_layers) throw std::invalid_argument("model: topical layer " + std::to_string(l) + " out of range");
  }
  for (auto h : topical_heads) {
    if (h >= n_heads) throw std::invalid_argument("model: topical head " + std::to_string(h) + " out of range");
  }
  if (!(init_std > 0.0)) throw std::invalid_argument("model: init_std must be > 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"n_encoder_layers", n_encoder_layers},
          {"n_decoder_layers", n_decoder_layers},
          {"ffn_width", ffn_width},
          {"max_positions", max_positions},
          {"topical_attention", topical_attention},
          {"topical_layers", topical_layers},
          {"topical_heads", topical_heads},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_encoder_layers = j.value("n_encoder_layers", c.n_encoder_layers);
  c.n_decoder_layers = j.value("n_decoder_layers", c.n_decoder_layers);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.topical_attention = j.value("topical_attention", c.topical_attention);
  c.topical_layers = j.value("topical_layers", c.topical_layers);
  c.topical_heads = j.value("topical_heads", c.topical_heads);
  c.init_std = j.value("init_std", c.init_std);
  return c;
}

ModelInput make_input(const corpus::Example& ex, const guidance::GuidanceVector* g, bool use_prompt) {
  ModelInput in;
  in.id = ex.id;
  const bool prompt = use_prompt && !ex.topic_prompt.empty();
  if (prompt) {
    in.encoder_ids = ex.topic_prompt;
    in.encoder_ids.push_back(corpus::kSep);
  }
  const std::size_t offset = in.encoder_ids.size();
  in.encoder_ids.insert(in.encoder_ids.end(), ex.source.begin(), ex.source.end());
  in.keep.resize(in.encoder_ids.size());
  for (std::size_t i = 0; i < in.encoder_ids.size(); ++i) in.keep[i] = in.encoder_ids[i] == corpus::kPad ? 0 : 1;
  if (g) {
    if (g->size() != ex.source.size()) {
      throw std::invalid_argument("make_input: guidance length " + std::to_string(g->size()) + " != source length " +
                                  std::to_string(ex.source.size()) + " for '" + ex.id + "'");
    }
    in.guidance.assign(offset, guidance::kOovScore);
    in.guidance.insert(in.guidance.end(), g->scores.begin(), g->scores.end());
  }
  in.decoder_input.push_back(corpus::kBos);
  in.decoder_input.insert(in.decoder_input.end(), ex.summary.begin(), ex.summary.end());
  in.targets = ex.summary;
  in.targets.push_back(corpus::kEos);
  return in;
}

std::vector<numerics::NamedTensor> ModelWeights::named() const {
  std::vector<numerics::NamedTensor> out;
  out.push_back({"token_embedding", token_embedding});
  auto lin = [&](const std::string& p, const Linear& l) {
    out.push_back({p + ".w", l.w});
    out.push_back({p + ".b", l.b});
  };
  auto norm = [&](const std::string& p, const Norm& n) {
    out.push_back({p + ".gain", n.gain});
    out.push_back({p + ".bias", n.bias});
  };
  auto attn = [&](const std::string& p, const AttentionWeights& a) {
    lin(p + ".q", a.q);
    lin(p + ".k", a.k);
    lin(p + ".v", a.v);
    lin(p + ".o", a.o);
  };
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    norm(p + ".ln1", encoder[l].ln1);
    attn(p + ".self", encoder[l].self);
    norm(p + ".ln2", encoder[l].ln2);
    lin(p + ".ffn.up", encoder[l].ffn.up);
    lin(p + ".ffn.down", encoder[l].ffn.down);
  }
  norm("encoder.norm", encoder_norm);
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l);
    norm(p + ".ln1", decoder[l].ln1);
    attn(p + ".self", decoder[l].self);
    norm(p + ".ln2", decoder[l].ln2);
    attn(p + ".cross", decoder[l].cross);
    norm(p + ".ln3", decoder[l].ln3);
    lin(p + ".ffn.up", decoder[l].ffn.up);
    lin(p + ".ffn.down", decoder[l].ffn.down);
  }
  norm("decoder.norm", decoder_norm);
  return out;
}

namespace {

Tensor normal(std::size_t r, std::size_t c, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return Tensor(r, c, std::move(v), true);
}

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), Tensor::zeros(1, out, true)};
}

Norm make_norm(std::size_t d) { return {Tensor::full(1, d, 1.0, true), Tensor::zeros(1, d, true)}; }

AttentionWeights make_attention(std::size_t d, std::mt19937_64& rng) {
  return {make_linear(d, d, rng), make_linear(d, d, rng), make_linear(d, d, rng), make_linear(d, d, rng)};
}

Tensor apply(const Linear& l, const Tensor& x) { return ops::add_row(ops::matmul(x, l.w), l.b); }
Tensor apply(const Norm& n, const Tensor& x) { return ops::layer_norm(x, n.gain, n.bias); }
Tensor apply(const FeedForward& f, const Tensor& x) { return apply(f.down, ops::gelu(apply(f.up, x))); }

std::vector<std::uint8_t> expand(std::span<const std::uint8_t> key_keep, std::size_t rows) {
  std::vector<std::uint8_t> keep(rows * key_keep.size());
  for (std::size_t r = 0; r < rows; ++r) std::copy(key_keep.begin(), key_keep.end(), keep.begin() + r * key_keep.size());
  return keep;
}

std::vector<std::uint8_t> causal(std::size_t n) {
  std::vector<std::uint8_t> keep(n * n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c <= r; ++c) keep[r * n + c] = 1;
  }
  return keep;
}

// Multi-head attention from precomputed keys and values.
Tensor attend_kv(const ModelConfig& cfg, const AttentionWeights& a, const Tensor& xq, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> keep, const Tensor* guidance, std::size_t layer) {
  const Tensor q = apply(a.q, xq);
  const std::size_t dk = cfg.d_k();
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * dk, dk);
    const Tensor kh = ops::slice_cols(k, h * dk, dk);
    const Tensor vh = ops::slice_cols(v, h * dk, dk);
    Tensor weights = attention_weights_masked(qh, kh, keep);
    if (guidance && cfg.topical_at(layer, h)) weights = mix_guidance(weights, *guidance);
    heads.push_back(ops::matmul(weights, vh));
  }
  return apply(a.o, ops::concat_cols(heads));
}

}  // namespace

Transformer::Transformer(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_model;
  w_.token_embedding = normal(cfg_.vocab_size, d, cfg_.init_std, rng);
  for (std::size_t l = 0; l < cfg_.n_encoder_layers; ++l) {
    EncoderLayer e;
    e.ln1 = make_norm(d);
    e.self = make_attention(d, rng);
    e.ln2 = make_norm(d);
    e.ffn = {make_linear(d, cfg_.ffn_width, rng), make_linear(cfg_.ffn_width, d, rng)};
    w_.encoder.push_back(std::move(e));
  }
  w_.encoder_norm = make_norm(d);
  for (std::size_t l = 0; l < cfg_.n_decoder_layers; ++l) {
    DecoderLayer dl;
    dl.ln1 = make_norm(d);
    dl.self = make_attention(d, rng);
    dl.ln2 = make_norm(d);
    dl.cross = make_attention(d, rng);
    dl.ln3 = make_norm(d);
    dl.ffn = {make_linear(d, cfg_.ffn_width, rng), make_linear(cfg_.ffn_width, d, rng)};
    w_.decoder.push_back(std::move(dl));
  }
  w_.decoder_norm = make_norm(d);

  positions_.resize(cfg_.max_positions * d);
  for (std::size_t p = 0; p < cfg_.max_positions; ++p) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      positions_[p * d + i] = std::sin(static_cast<double>(p) * freq);
      if (i + 1 < d) positions_[p * d + i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  }
}

std::vector<Tensor> Transformer::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : w_.named()) out.push_back(nt.tensor);
  return out;
}

Tensor Transformer::embed(std::span<const TokenId> ids, std::size_t offset) const {
  if (offset + ids.size() > cfg_.max_positions) {
    throw std::invalid_argument("sequence of length " + std::to_string(offset + ids.size()) +
                                " exceeds max_positions " + std::to_string(cfg_.max_positions));
  }
  for (TokenId id : ids) {
    if (id >= cfg_.vocab_size) throw std::invalid_argument("token id " + std::to_string(id) + " >= vocab size");
  }
  const std::size_t d = cfg_.d_model;
  const Tensor pos(ids.size(), d,
                   std::vector<double>(positions_.begin() + static_cast<std::ptrdiff_t>(offset * d),
                                       positions_.begin() + static_cast<std::ptrdiff_t>((offset + ids.size()) * d)));
  return ops::add(ops::scale(ops::embedding(w_.token_embedding, ids), std::sqrt(static_cast<double>(d))), pos);
}

Tensor Transformer::attend(const AttentionWeights& a, const Tensor& xq, const Tensor& xkv,
                           std::span<const std::uint8_t> keep, const Tensor* guidance, std::size_t layer) const {
  return attend_kv(cfg_, a, xq, apply(a.k, xkv), apply(a.v, xkv), keep, guidance, layer);
}

Tensor Transformer::encode(std::span<const TokenId> ids, std::span<const std::uint8_t> keep) const {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  if (keep.size() != ids.size()) throw std::invalid_argument("encode: mask length differs from input length");
  Tensor x = embed(ids, 0);
  const auto self_keep = expand(keep, ids.size());
  for (const auto& layer : w_.encoder) {
    x = ops::add(x, attend(layer.self, apply(layer.ln1, x), apply(layer.ln1, x), self_keep, nullptr, 0));
    x = ops::add(x, apply(layer.ffn, apply(layer.ln2, x)));
  }
  return apply(w_.encoder_norm, x);
}

Tensor Transformer::decode(const Tensor& memory, std::span<const std::uint8_t> keep, const Tensor* guidance,
                           std::span<const TokenId> decoder_input) const {
  if (decoder_input.empty()) throw std::invalid_argument("decode: empty decoder input");
  if (keep.size() != memory.rows()) throw std::invalid_argument("decode: mask length differs from memory length");
  Tensor y = embed(decoder_input, 0);
  const std::size_t n = decoder_input.size();
  const auto self_keep = causal(n);
  const auto cross_keep = expand(keep, n);
  for (std::size_t l = 0; l < w_.decoder.size(); ++l) {
    const auto& layer = w_.decoder[l];
    const Tensor h1 = apply(layer.ln1, y);
    y = ops::add(y, attend(layer.self, h1, h1, self_keep, nullptr, l));
    y = ops::add(y, attend(layer.cross, apply(layer.ln2, y), memory, cross_keep, guidance, l));
    y = ops::add(y, apply(layer.ffn, apply(layer.ln3, y)));
  }
  return ops::matmul_nt(apply(w_.decoder_norm, y), w_.token_embedding);
}

std::optional<Tensor> Transformer::guidance_row(const ModelInput& in) const {
  if (!cfg_.topical_attention) return std::nullopt;
  if (in.guidance.empty()) {
    throw std::invalid_argument("model uses topical attention but example '" + in.id + "' has no guidance");
  }
  if (in.guidance.size() != in.encoder_ids.size()) {
    throw std::invalid_argument("guidance length " + std::to_string(in.guidance.size()) + " != encoder length " +
                                std::to_string(in.encoder_ids.size()) + " for '" + in.id + "'");
  }
  return guidance_distribution(in.guidance, in.keep);
}

ForwardResult Transformer::forward(const ModelInput& in) const {
  if (in.targets.size() != in.decoder_input.size()) {
    throw std::invalid_argument("forward: decoder input and targets differ in length for '" + in.id + "'");
  }
  const auto g = guidance_row(in);
  const Tensor memory = encode(in.encoder_ids, in.keep);
  ForwardResult r;
  r.logits = decode(memory, in.keep, g ? &*g : nullptr, in.decoder_input);
  std::vector<std::size_t> targets(in.targets.begin(), in.targets.end());
  for (auto& t : targets) {
    if (t == corpus::kPad) {
      t = ops::kIgnoreIndex;
    } else {
      ++r.tokens;
    }
  }
  r.loss = ops::cross_entropy(r.logits, targets);
  return r;
}

Tensor Transformer::batch_loss(std::span<const ModelInput> batch) const {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<Tensor> logits;
  std::vector<std::size_t> targets;
  for (const auto& in : batch) {
    if (in.targets.size() != in.decoder_input.size()) {
      throw std::invalid_argument("batch_loss: decoder input and targets differ in length for '" + in.id + "'");
    }
    const auto g = guidance_row(in);
    const Tensor memory = encode(in.encoder_ids, in.keep);
    logits.push_back(decode(memory, in.keep, g ? &*g : nullptr, in.decoder_input));
    for (TokenId t : in.targets) targets.push_back(t == corpus::kPad ? ops::kIgnoreIndex : t);
  }
  return ops::cross_entropy(logits.size() == 1 ? logits[0] : ops::concat_rows(logits), targets);
}

Transformer::Stepper::Stepper(const Transformer& model, const ModelInput& in) : model_(&model), keep_(in.keep) {
  numerics::NoGradGuard guard;
  guidance_ = model.guidance_row(in);
  const Tensor memory = model.encode(in.encoder_ids, in.keep);
  for (const auto& layer : model.w_.decoder) {
    cross_k_.push_back(apply(layer.cross.k, memory));
    cross_v_.push_back(apply(layer.cross.v, memory));
  }
}

DecodeCache Transformer::Stepper::start() const {
  DecodeCache c;
  c.self_k.resize(model_->w_.decoder.size());
  c.self_v.resize(model_->w_.decoder.size());
  return c;
}

std::vector<double> Transformer::Stepper::step(DecodeCache& cache, TokenId token) const {
  numerics::NoGradGuard guard;
  const auto& m = *model_;
  const TokenId ids[1] = {token};
  Tensor y = m.embed(ids, cache.length);
  for (std::size_t l = 0; l < m.w_.decoder.size(); ++l) {
    const auto& layer = m.w_.decoder[l];
    const Tensor h1 = apply(layer.ln1, y);
    const Tensor k = apply(layer.self.k, h1), v = apply(layer.self.v, h1);
    if (cache.length == 0) {
      cache.self_k[l] = k;
      cache.self_v[l] = v;
    } else {
      const std::vector<Tensor> ks = {cache.self_k[l], k}, vs = {cache.self_v[l], v};
      cache.self_k[l] = ops::concat_rows(ks);
      cache.self_v[l] = ops::concat_rows(vs);
    }
    y = ops::add(y, attend_kv(m.cfg_, layer.self, h1, cache.self_k[l], cache.self_v[l], {}, nullptr, l));
    y = ops::add(y, attend_kv(m.cfg_, layer.cross, apply(layer.ln2, y), cross_k_[l], cross_v_[l], keep_,
                              guidance_ ? &*guidance_ : nullptr, l));
    y = ops::add(y, apply(layer.ffn, apply(layer.ln3, y)));
  }
  ++cache.length;
  const Tensor lp = ops::log_softmax_rows(ops::matmul_nt(apply(m.w_.decoder_norm, y), m.w_.token_embedding));
  return {lp.data().begin(), lp.data().end()};
}

void Transformer::save(const std::filesystem::path& path, const nlohmann::json& extra_meta) const {
  numerics::Checkpoint ck;
  ck.kind = "summarizer";
  ck.meta = extra_meta;
  ck.meta["model_config"] = cfg_.to_json();
  ck.meta["seed"] = seed_;
  ck.tensors = w_.named();
  numerics::save_checkpoint(path, ck);
}

Transformer Transformer::load(const std::filesystem::path& path, nlohmann::json* meta) {
  const auto ck = numerics::load_checkpoint(path, "summarizer");
  Transformer m(ModelConfig::from_json(ck.meta.at("model_config")), ck.meta.at("seed").get<std::uint64_t>());
  auto named = m.w_.named();
  if (named.size() != ck.tensors.size()) {
    throw std::runtime_error("summarizer checkpoint: expected " + std::to_string(named.size()) + " tensors, found " +
                             std::to_string(ck.tensors.size()));
  }
  for (auto& nt : named) {
    const auto& src = ck.get(nt.name);
    if (src.rows() != nt.tensor.rows() || src.cols() != nt.tensor.cols()) {
      throw std::runtime_error("summarizer checkpoint: tensor '" + nt.name + "' has shape " +
                               numerics::shape_string(src) + ", config expects " + numerics::shape_string(nt.tensor));
    }
    std::copy(src.data().begin(), src.data().end(), nt.tensor.mutable_data().begin());
  }
  if (meta) *meta = ck.meta;
  return m;
}

}  // namespace topicsum::model
