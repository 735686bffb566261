// SPDX-License-Identifier: Apache-2.0
//
// The conditional hybrid variational transformer: a pre-LN transformer
// encoder-decoder whose decoder cross-attends a contextual memory built from
// the context encoding plus one hybrid latent vector L[j] = z_s + H[j].
//
// Two encoder passes feed the latent heads. The joint pass over
// [context, SEP, response] drives the recognition heads
//   (mu_i, log sigma_i^2) = tanh(h_i W_d) W_u
// and the context-only pass drives the prior heads
//   (mu'_i, log sigma'_i^2) = h'_i W_u'.
// Per-token Gaussians are merged into the sentence latent by additive mixing.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chvt/autodiff.hpp"
#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/latent_math.hpp"

namespace chvt {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::Var;
using corpus::TokenId;
using latent::DiagGaussian;
using Vector = Eigen::VectorXd;

/// Named, index-addressed parameter storage. Indices stay valid across
/// copies, so a model can be copied by value.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init, bool frozen = false) {
    require(index_.count(name) == 0, "ParameterSet: duplicate parameter '" + name + "'");
    const std::size_t i = params_.size();
    index_.emplace(name, i);
    params_.push_back(Parameter{std::move(name), std::move(init), {}, frozen});
    return i;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  Parameter& at(const std::string& name) {
    auto i = find(name);
    require(i.has_value(), "ParameterSet: no parameter '" + name + "'");
    return params_[*i];
  }
  const Parameter& at(const std::string& name) const {
    auto i = find(name);
    require(i.has_value(), "ParameterSet: no parameter '" + name + "'");
    return params_[*i];
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// One forward pass over a graph: hands out a single leaf node per parameter
/// and applies dropout only in training mode.
class ForwardContext {
 public:
  /// Recording pass whose gradients land in `params`.
  ForwardContext(Graph& g, ParameterSet& params, bool training, std::mt19937_64* rng, double dropout)
      : g_(g), params_(&params), sink_(&params), training_(training), rng_(rng), dropout_(dropout),
        cache_(params.size()) {}

  /// Read-only evaluation pass.
  ForwardContext(Graph& g, const ParameterSet& params) : g_(g), params_(&params), cache_(params.size()) {}

  Graph& graph() { return g_; }
  bool training() const { return training_; }

  Var param(std::size_t i) {
    if (!cache_[i].valid()) cache_[i] = g_.parameter((*params_)[i], sink_ ? &(*sink_)[i] : nullptr);
    return cache_[i];
  }

  Var drop(const Var& x) {
    if (!training_ || dropout_ <= 0.0 || rng_ == nullptr) return x;
    return ad::dropout(x, dropout_, *rng_);
  }

 private:
  Graph& g_;
  const ParameterSet* params_;
  ParameterSet* sink_ = nullptr;
  bool training_ = false;
  std::mt19937_64* rng_ = nullptr;
  double dropout_ = 0.0;
  std::vector<Var> cache_;
};

struct EncoderOutput {
  Matrix states;
  int context_len = 0;
  /// Rows after the context; for a joint encoding this counts the
  /// separator plus the response tokens.
  int response_len = 0;
  bool truncated = false;
};

struct HybridLatentSet {
  Vector z_s;
  Matrix L;
};

struct DecodeResult {
  double total = 0.0;
  Vector per_token;
  bool truncated = false;
};

/// Per-token Gaussians as graph nodes, n x d_z each.
struct TokenGaussians {
  Var mu;
  Var log_var;
};

/// Encoder input together with the rows the latent heads read.
struct EncoderInput {
  std::vector<TokenId> ids;
  std::vector<int> segments;
  int head_begin = 0;
  int head_rows = 0;
  int context_len = 0;
  bool truncated = false;
};

class ChvtModel {
 public:
  static constexpr int kContextSegment = 0;
  static constexpr int kResponseSegment = 1;

  ChvtModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  int encoder_positions() const { return 2 * cfg_.max_len + 2; }
  int decoder_positions() const { return cfg_.max_len + 1; }

  /// Discrete latent table H, [K, d_model].
  const Matrix& table() const { return params_[latent_table_].value; }
  Matrix& mutable_table() { return params_[latent_table_].value; }
  /// Encoder token embeddings, [vocab, d_model].
  const Matrix& token_embeddings() const { return params_[enc_.tok].value; }

  // ----- input assembly -----------------------------------------------------

  /// [CLS?] context, all context segment. Contexts keep their last max_len
  /// tokens.
  EncoderInput context_input(std::span<const TokenId> context) const {
    require(!context.empty(), "context must contain at least one token");
    EncoderInput in;
    const bool cls = cfg_.latent_source == LatentSource::cls_token;
    auto ctx = clip_left(context, in.truncated);
    if (cls) in.ids.push_back(corpus::kBos);
    in.ids.insert(in.ids.end(), ctx.begin(), ctx.end());
    in.segments.assign(in.ids.size(), kContextSegment);
    in.context_len = static_cast<int>(in.ids.size());
    in.head_begin = 0;
    in.head_rows = cls ? 1 : static_cast<int>(ctx.size());
    return in;
  }

  /// [CLS?] context SEP response, with segment embeddings distinguishing the
  /// two sides. Responses keep their first max_len tokens.
  EncoderInput joint_input(std::span<const TokenId> context, std::span<const TokenId> response) const {
    require(!response.empty(), "response must contain at least one token");
    EncoderInput in = context_input(context);
    bool cut = false;
    auto resp = clip_right(response, cut);
    in.truncated = in.truncated || cut;
    in.ids.push_back(corpus::kSep);
    in.segments.push_back(kContextSegment);
    in.ids.insert(in.ids.end(), resp.begin(), resp.end());
    in.segments.insert(in.segments.end(), resp.size(), kResponseSegment);
    return in;
  }

  // ----- graph-level building blocks ------------------------------------------

  Var encode(ForwardContext& f, std::span<const TokenId> ids, std::span<const int> segments) const {
    require(!ids.empty(), "encode: empty input");
    require(ids.size() == segments.size(), "encode: one segment id per token required");
    require(static_cast<int>(ids.size()) <= encoder_positions(), "encode: input exceeds the position table");
    for (TokenId t : ids) require(t >= 0 && t < cfg_.vocab_size, "encode: token id out of range");
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Var x = ad::add(ad::embedding(f.param(enc_.tok), ids), ad::embedding(f.param(enc_.pos), pos));
    x = ad::add(x, ad::embedding(f.param(enc_.seg), segments));
    x = f.drop(x);
    for (const auto& layer : enc_.layers) {
      Var h = layer_norm(f, x, layer.ln1);
      x = ad::add(x, f.drop(attention(f, h, h, layer.self, false)));
      h = layer_norm(f, x, layer.ln2);
      x = ad::add(x, f.drop(feed_forward(f, h, layer.ff1, layer.ff2)));
    }
    return layer_norm(f, x, enc_.ln_final);
  }

  Var encode(ForwardContext& f, const EncoderInput& in) const { return encode(f, in.ids, in.segments); }

  /// Rows of an encoding the latent heads read.
  static Var head_rows(const EncoderInput& in, const Var& states) {
    return ad::slice_rows(states, in.head_begin, in.head_rows);
  }

  /// tanh(h W_d) W_u, split into (mu, log_var).
  TokenGaussians recognition(ForwardContext& f, const Var& context_states) const {
    Var hidden = ad::tanh(ad::matmul(context_states, f.param(rec_down_)));
    Var out = ad::matmul(hidden, f.param(rec_up_));
    return {ad::slice_cols(out, 0, cfg_.d_z()), ad::slice_cols(out, cfg_.d_z(), cfg_.d_z())};
  }

  /// h' W_u', split into (mu', log_var').
  TokenGaussians prior(ForwardContext& f, const Var& context_states) const {
    Var out = ad::matmul(context_states, f.param(prior_up_));
    return {ad::slice_cols(out, 0, cfg_.d_z()), ad::slice_cols(out, cfg_.d_z(), cfg_.d_z())};
  }

  /// Mixing weights as an n x 1 column summing to one.
  Var mixing_weights(ForwardContext& f, const Var& context_states, bool posterior) const {
    const Eigen::Index n = context_states.rows();
    if (cfg_.mixing_weights == MixingWeights::uniform || n == 1) {
      return f.graph().constant(Matrix::Constant(n, 1, 1.0 / static_cast<double>(n)));
    }
    Var scores = ad::matmul(context_states, f.param(posterior ? mix_query_post_ : mix_query_prior_));
    return ad::transpose(ad::softmax_rows(ad::transpose(scores)));
  }

  /// Additive mixing: (w^T mu, w^T log_var), each 1 x d_z.
  static TokenGaussians mix(const TokenGaussians& per_token, const Var& weights) {
    Var wt = ad::transpose(weights);
    return {ad::matmul(wt, per_token.mu), ad::matmul(wt, per_token.log_var)};
  }

  /// mu + exp(log_var / 2) * noise on 1 x d_z nodes.
  static Var reparameterize(const TokenGaussians& d, const Matrix& noise) {
    Graph& g = *d.mu.graph();
    Var eps = g.constant(noise);
    return ad::add(d.mu, ad::hadamard(ad::exp(ad::scale(d.log_var, 0.5)), eps));
  }

  /// L[j] = z_s + H[j], 1 x d_model.
  Var hybrid_latent(ForwardContext& f, const Var& z_s, int j) const {
    require(j >= 0 && j < cfg_.branches(), "hybrid_latent: branch index out of range");
    return ad::add(z_s, ad::slice_rows(f.param(latent_table_), j, 1));
  }

  /// M = h' + L broadcast over rows.
  static Var memory(const Var& context_states, const Var& latent) { return ad::add_row(context_states, latent); }

  /// Log-probabilities [T, vocab] of the next token after each decoder input
  /// position, under causal self-attention and cross-attention to `memory`.
  Var decoder_log_probs(ForwardContext& f, const Var& memory, std::span<const TokenId> decoder_input) const {
    require(!decoder_input.empty(), "decode: empty decoder input");
    require(static_cast<int>(decoder_input.size()) <= decoder_positions(), "decode: input exceeds the position table");
    for (TokenId t : decoder_input) require(t >= 0 && t < cfg_.vocab_size, "decode: token id out of range");
    std::vector<int> pos(decoder_input.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Var y = ad::add(ad::embedding(f.param(dec_.tok), decoder_input), ad::embedding(f.param(dec_.pos), pos));
    y = f.drop(y);
    for (const auto& layer : dec_.layers) {
      Var h = layer_norm(f, y, layer.ln1);
      y = ad::add(y, f.drop(attention(f, h, h, layer.self, true)));
      h = layer_norm(f, y, layer.ln2);
      y = ad::add(y, f.drop(attention(f, h, memory, layer.cross, false)));
      h = layer_norm(f, y, layer.ln3);
      y = ad::add(y, f.drop(feed_forward(f, h, layer.ff1, layer.ff2)));
    }
    y = layer_norm(f, y, dec_.ln_final);
    Var logits = ad::add_row(ad::matmul(y, f.param(out_.w)), f.param(out_.b));
    return ad::log_softmax_rows(logits);
  }

  /// Teacher forcing: inputs [BOS, r_1..r_m], targets [r_1..r_m, EOS].
  /// Returns the per-token log-probabilities as an (m+1) x 1 column.
  Var response_log_probs(ForwardContext& f, const Var& memory, std::span<const TokenId> response,
                         bool* truncated = nullptr) const {
    bool cut = false;
    auto resp = clip_right(response, cut);
    if (truncated) *truncated = cut;
    std::vector<TokenId> input{corpus::kBos};
    input.insert(input.end(), resp.begin(), resp.end());
    std::vector<int> target(resp.begin(), resp.end());
    target.push_back(corpus::kEos);
    return ad::pick(decoder_log_probs(f, memory, input), target);
  }

  // ----- value-level operations -------------------------------------------------

  /// Context-only encoding of raw token ids (no CLS marker).
  EncoderOutput encode(std::span<const TokenId> ids) const {
    require(!ids.empty(), "encode: empty input");
    bool cut = false;
    auto kept = clip_left(ids, cut);
    std::vector<int> seg(kept.size(), kContextSegment);
    Graph g(false);
    ForwardContext f(g, params_);
    Var s = encode(f, kept, seg);
    return {s.value(), static_cast<int>(kept.size()), 0, cut};
  }

  EncoderOutput encode(const EncoderInput& in) const {
    Graph g(false);
    ForwardContext f(g, params_);
    Var s = encode(f, in);
    return {s.value(), in.context_len, static_cast<int>(in.ids.size()) - in.context_len, in.truncated};
  }

  std::vector<DiagGaussian> recognition_heads(const Matrix& context_states) const {
    Graph g(false);
    ForwardContext f(g, params_);
    return to_gaussians(recognition(f, g.constant(context_states)));
  }

  std::vector<DiagGaussian> prior_heads(const Matrix& context_states) const {
    Graph g(false);
    ForwardContext f(g, params_);
    return to_gaussians(prior(f, g.constant(context_states)));
  }

  /// Mixing weights for the given head rows, as a plain vector.
  Vector mixing_weight_values(const Matrix& context_states, bool posterior) const {
    Graph g(false);
    ForwardContext f(g, params_);
    Var w = mixing_weights(f, g.constant(context_states), posterior);
    return Eigen::Map<const Vector>(w.value().data(), w.value().size());
  }

  DecodeResult decode_logprob(const Matrix& memory, std::span<const TokenId> response_ids) const {
    require(!response_ids.empty(), "decode_logprob: empty response");
    Graph g(false);
    ForwardContext f(g, params_);
    DecodeResult r;
    Var lp = response_log_probs(f, g.constant(memory), response_ids, &r.truncated);
    r.per_token = Eigen::Map<const Vector>(lp.value().data(), lp.value().size());
    r.total = r.per_token.sum();
    return r;
  }

  /// Next-token log-probabilities after `prefix` (which starts with BOS).
  Vector next_token_log_probs(const Matrix& memory, std::span<const TokenId> prefix) const {
    Graph g(false);
    ForwardContext f(g, params_);
    Var lp = decoder_log_probs(f, g.constant(memory), prefix);
    return lp.value().row(lp.rows() - 1).transpose();
  }

  static std::vector<DiagGaussian> to_gaussians(const TokenGaussians& tg) {
    std::vector<DiagGaussian> out;
    for (Eigen::Index i = 0; i < tg.mu.rows(); ++i) {
      out.emplace_back(tg.mu.value().row(i).transpose(), tg.log_var.value().row(i).transpose());
    }
    return out;
  }

 private:
  struct LinearIdx {
    std::size_t w = 0, b = 0;
  };
  struct NormIdx {
    std::size_t gamma = 0, beta = 0;
  };
  struct AttentionIdx {
    LinearIdx q, k, v, o;
  };
  struct EncoderLayerIdx {
    NormIdx ln1, ln2;
    AttentionIdx self;
    LinearIdx ff1, ff2;
  };
  struct DecoderLayerIdx {
    NormIdx ln1, ln2, ln3;
    AttentionIdx self, cross;
    LinearIdx ff1, ff2;
  };
  struct EncoderIdx {
    std::size_t tok = 0, pos = 0, seg = 0;
    std::vector<EncoderLayerIdx> layers;
    NormIdx ln_final;
  };
  struct DecoderIdx {
    std::size_t tok = 0, pos = 0;
    std::vector<DecoderLayerIdx> layers;
    NormIdx ln_final;
  };

  std::vector<TokenId> clip_left(std::span<const TokenId> ids, bool& cut, int limit = -1) const {
    const auto lim = static_cast<std::size_t>(limit < 0 ? cfg_.max_len : limit);
    cut = ids.size() > lim;
    auto first = cut ? ids.end() - static_cast<std::ptrdiff_t>(lim) : ids.begin();
    return {first, ids.end()};
  }

  std::vector<TokenId> clip_right(std::span<const TokenId> ids, bool& cut) const {
    const auto lim = static_cast<std::size_t>(cfg_.max_len);
    cut = ids.size() > lim;
    return {ids.begin(), cut ? ids.begin() + static_cast<std::ptrdiff_t>(lim) : ids.end()};
  }

  static Matrix normal(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd) {
    std::normal_distribution<double> nd(0.0, sd);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
  }

  static double xavier(Eigen::Index in, Eigen::Index out) {
    return std::sqrt(2.0 / static_cast<double>(in + out));
  }

  LinearIdx linear(std::mt19937_64& rng, const std::string& name, int in, int out) {
    return {params_.add(name + ".w", normal(rng, in, out, xavier(in, out))),
            params_.add(name + ".b", Matrix::Zero(1, out))};
  }

  NormIdx norm(const std::string& name) {
    return {params_.add(name + ".gamma", Matrix::Ones(1, cfg_.d_model)),
            params_.add(name + ".beta", Matrix::Zero(1, cfg_.d_model))};
  }

  AttentionIdx attention_params(std::mt19937_64& rng, const std::string& name) {
    const int d = cfg_.d_model;
    return {linear(rng, name + ".q", d, d), linear(rng, name + ".k", d, d), linear(rng, name + ".v", d, d),
            linear(rng, name + ".o", d, d)};
  }

  void build(std::mt19937_64& rng) {
    const int d = cfg_.d_model, v = cfg_.vocab_size;
    constexpr double emb_sd = 0.1;
    enc_.tok = params_.add("enc.tok_emb", normal(rng, v, d, emb_sd));
    enc_.pos = params_.add("enc.pos_emb", normal(rng, encoder_positions(), d, emb_sd));
    enc_.seg = params_.add("enc.seg_emb", normal(rng, 2, d, emb_sd));
    for (int l = 0; l < cfg_.n_layers_enc; ++l) {
      const std::string p = "enc.layer" + std::to_string(l);
      EncoderLayerIdx layer;
      layer.ln1 = norm(p + ".ln1");
      layer.self = attention_params(rng, p + ".self_attn");
      layer.ln2 = norm(p + ".ln2");
      layer.ff1 = linear(rng, p + ".ff1", d, cfg_.d_ff);
      layer.ff2 = linear(rng, p + ".ff2", cfg_.d_ff, d);
      enc_.layers.push_back(layer);
    }
    enc_.ln_final = norm("enc.ln_final");

    rec_down_ = params_.add("rec.W_d", normal(rng, d, d, xavier(d, d)));
    rec_up_ = params_.add("rec.W_u", normal(rng, d, 2 * d, xavier(d, 2 * d)));
    prior_up_ = params_.add("prior.W_u", normal(rng, d, 2 * d, xavier(d, 2 * d)));
    mix_query_post_ = params_.add("mix.query_post", Matrix::Zero(d, 1));
    mix_query_prior_ = params_.add("mix.query_prior", Matrix::Zero(d, 1));

    if (cfg_.use_dlv) {
      latent_table_ = params_.add("latent.H", normal(rng, cfg_.K, d, 0.02));
    } else {
      latent_table_ = params_.add("latent.H", Matrix::Zero(1, d), /*frozen=*/true);
    }

    dec_.tok = params_.add("dec.tok_emb", normal(rng, v, d, emb_sd));
    dec_.pos = params_.add("dec.pos_emb", normal(rng, decoder_positions(), d, emb_sd));
    for (int l = 0; l < cfg_.n_layers_dec; ++l) {
      const std::string p = "dec.layer" + std::to_string(l);
      DecoderLayerIdx layer;
      layer.ln1 = norm(p + ".ln1");
      layer.self = attention_params(rng, p + ".self_attn");
      layer.ln2 = norm(p + ".ln2");
      layer.cross = attention_params(rng, p + ".cross_attn");
      layer.ln3 = norm(p + ".ln3");
      layer.ff1 = linear(rng, p + ".ff1", d, cfg_.d_ff);
      layer.ff2 = linear(rng, p + ".ff2", cfg_.d_ff, d);
      dec_.layers.push_back(layer);
    }
    dec_.ln_final = norm("dec.ln_final");
    out_ = linear(rng, "dec.out", d, v);
  }

  static Var layer_norm(ForwardContext& f, const Var& x, const NormIdx& n) {
    return ad::layer_norm(x, f.param(n.gamma), f.param(n.beta));
  }

  static Var apply_linear(ForwardContext& f, const Var& x, const LinearIdx& l) {
    return ad::add_row(ad::matmul(x, f.param(l.w)), f.param(l.b));
  }

  Var feed_forward(ForwardContext& f, const Var& x, const LinearIdx& ff1, const LinearIdx& ff2) const {
    return apply_linear(f, ad::gelu(apply_linear(f, x, ff1)), ff2);
  }

  Var attention(ForwardContext& f, const Var& query_in, const Var& kv_in, const AttentionIdx& a, bool causal) const {
    Var q = apply_linear(f, query_in, a.q);
    Var k = apply_linear(f, kv_in, a.k);
    Var v = apply_linear(f, kv_in, a.v);
    const int heads = cfg_.n_heads;
    const int dh = cfg_.d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
      Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
      Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
      Var p = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), causal);
      outs.push_back(ad::matmul(p, vh));
    }
    Var cat = heads == 1 ? outs.front() : ad::concat_cols(outs);
    return apply_linear(f, cat, a.o);
  }

  ModelConfig cfg_;
  ParameterSet params_;
  EncoderIdx enc_;
  DecoderIdx dec_;
  LinearIdx out_;
  std::size_t rec_down_ = 0, rec_up_ = 0, prior_up_ = 0;
  std::size_t mix_query_post_ = 0, mix_query_prior_ = 0;
  std::size_t latent_table_ = 0;
};

/// Sentence latent from per-token Gaussians by additive mixing.
inline DiagGaussian sentence_latent(const std::vector<DiagGaussian>& per_token, const Vector& weights) {
  return latent::additive_mix(latent::MixtureSpec{per_token, weights});
}

inline DiagGaussian sentence_latent(const std::vector<DiagGaussian>& per_token) {
  return latent::additive_mix(latent::MixtureSpec::uniform(per_token));
}

/// L[j] = z_s + H[j] for every row j.
inline HybridLatentSet build_hlv(const Vector& z_s, const Matrix& table) {
  require(z_s.size() == table.cols(), "build_hlv: z_s dimension must equal d_model");
  Matrix L = table.rowwise() + z_s.transpose();
  return {z_s, std::move(L)};
}

/// M[i] = h'_i + L_j.
inline Matrix contextual_memory(const Matrix& context_states, const Vector& latent) {
  require(latent.size() == context_states.cols(), "contextual_memory: latent width mismatch");
  return context_states.rowwise() + latent.transpose();
}

}  // namespace chvt
