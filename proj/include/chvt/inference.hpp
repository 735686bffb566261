// SPDX-License-Identifier: Apache-2.0
//
// K-way generation from the prior and inner-product response selection.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/model.hpp"
#include "chvt/training.hpp"

namespace chvt {

struct Generation {
  std::vector<std::vector<TokenId>> responses;
  Vector z_s;
};

/// Mean over rows whose mask entry is true; an empty mask means all rows.
inline Vector pool_representation(const Matrix& states, const std::vector<bool>& mask = {}) {
  require(mask.empty() || static_cast<Eigen::Index>(mask.size()) == states.rows(),
          "pool_representation: mask length must match row count");
  Vector acc = Vector::Zero(states.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    acc += states.row(i).transpose();
    ++kept;
  }
  require(kept > 0, "pool_representation: no unmasked positions");
  return acc / static_cast<double>(kept);
}

/// Mask of non-pad positions.
inline std::vector<bool> non_pad_mask(std::span<const TokenId> ids) {
  std::vector<bool> m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != corpus::kPad;
  return m;
}

/// Pooled encoder representation of a token sequence, padding excluded.
inline Vector sequence_representation(const ChvtModel& model, std::span<const TokenId> ids) {
  EncoderOutput enc = model.encode(ids);
  std::vector<TokenId> kept(ids.end() - enc.context_len, ids.end());
  return pool_representation(enc.states, non_pad_mask(kept));
}

struct Selection {
  std::size_t best = 0;
  std::vector<double> scores;
};

/// argmax_j <pool(encode(context)), pool(encode(candidate_j))>, lowest index
/// on ties. Empty candidates score -inf.
inline Selection select_response(const ChvtModel& model, std::span<const TokenId> context,
                                 const std::vector<std::vector<TokenId>>& candidates) {
  require(!candidates.empty(), "select_response: need at least one candidate");
  const Vector c = sequence_representation(model, context);
  Selection sel;
  for (const auto& cand : candidates) {
    bool any = std::any_of(cand.begin(), cand.end(), [](TokenId t) { return t != corpus::kPad; });
    sel.scores.push_back(any ? c.dot(sequence_representation(model, cand)) : -std::numeric_limits<double>::infinity());
  }
  for (std::size_t j = 1; j < sel.scores.size(); ++j) {
    if (sel.scores[j] > sel.scores[sel.best]) sel.best = j;
  }
  return sel;
}

/// Prior sentence latent p(z_s | c) for a context.
inline DiagGaussian prior_sentence_latent(const ChvtModel& model, std::span<const TokenId> context) {
  Graph g(false);
  ForwardContext f(g, model.parameters());
  const EncoderInput in = model.context_input(context);
  Var rows = ChvtModel::head_rows(in, model.encode(f, in));
  TokenGaussians s = ChvtModel::mix(model.prior(f, rows), model.mixing_weights(f, rows, false));
  return {s.mu.value().row(0).transpose(), s.log_var.value().row(0).transpose()};
}

/// Posterior sentence latent q(z_s | c, r).
inline DiagGaussian posterior_sentence_latent(const ChvtModel& model, std::span<const TokenId> context,
                                              std::span<const TokenId> response) {
  Graph g(false);
  ForwardContext f(g, model.parameters());
  const EncoderInput in = model.joint_input(context, response);
  Var rows = ChvtModel::head_rows(in, model.encode(f, in));
  TokenGaussians s = ChvtModel::mix(model.recognition(f, rows), model.mixing_weights(f, rows, true));
  return {s.mu.value().row(0).transpose(), s.log_var.value().row(0).transpose()};
}

class Generator {
 public:
  Generator(const ChvtModel& model, GenConfig cfg) : model_(model), cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  /// Samples one z_s from the prior mixture and decodes one response per
  /// hybrid latent L[j].
  Generation generate_k(std::span<const TokenId> context) {
    require(!context.empty(), "generate_k: empty context");
    Vector noise(model_.config().d_z());
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise(k) = nd(rng_);
    return generate_k(context, noise);
  }

  Generation generate_k(std::span<const TokenId> context, const Vector& noise) {
    require(!context.empty(), "generate_k: empty context");
    const ModelConfig& mc = model_.config();
    Generation out;
    if (mc.use_clv) {
      out.z_s = latent::reparameterize(prior_sentence_latent(model_, context), noise);
    } else {
      out.z_s = Vector::Zero(mc.d_z());
    }
    const EncoderOutput enc = model_.encode(model_.context_input(context));
    const HybridLatentSet hlv = build_hlv(out.z_s, model_.table());
    for (int j = 0; j < mc.branches(); ++j) {
      const Matrix memory = contextual_memory(enc.states, hlv.L.row(j).transpose());
      out.responses.push_back(decode(memory));
    }
    return out;
  }

  /// Greedy or top-k decoding until the end token or the length cap. The
  /// end token is not included in the returned sequence.
  std::vector<TokenId> decode(const Matrix& memory) {
    const int cap = std::min(cfg_.max_new_tokens, model_.config().max_len);
    std::vector<TokenId> prefix{corpus::kBos};
    std::vector<TokenId> out;
    for (int t = 0; t < cap; ++t) {
      Vector lp = model_.next_token_log_probs(memory, prefix);
      for (TokenId banned : {corpus::kPad, corpus::kBos, corpus::kSep}) lp(banned) = -std::numeric_limits<double>::infinity();
      TokenId next = cfg_.decode_mode == DecodeMode::greedy ? argmax(lp) : sample_top_k(lp);
      if (next == corpus::kEos) break;
      out.push_back(next);
      prefix.push_back(next);
    }
    return out;
  }

 private:
  static TokenId argmax(const Vector& lp) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < lp.size(); ++i) {
      if (lp(i) > lp(best)) best = i;
    }
    return static_cast<TokenId>(best);
  }

  TokenId sample_top_k(const Vector& lp) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(lp.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.top_k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return lp(a) > lp(b) || (lp(a) == lp(b) && a < b); });
    std::vector<double> w;
    for (std::size_t i = 0; i < k; ++i) w.push_back(std::exp(lp(idx[i]) - lp(idx[0])));
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    return static_cast<TokenId>(idx[pick(rng_)]);
  }

  const ChvtModel& model_;
  GenConfig cfg_;
  std::mt19937_64 rng_;
};

/// Negative log-likelihood of each branch with z_s at the posterior mean
/// (zero when the continuous latent is off). Used for evaluation.
inline std::vector<double> branch_nll_at_posterior_mean(const ChvtModel& model, const corpus::DialoguePair& pair) {
  Graph g(false);
  ForwardContext f(g, model.parameters());
  ExampleGraph ex = build_example(model, f, pair, LatentDraw::posterior_mean, nullptr);
  std::vector<double> out;
  for (const Var& v : ex.branch_nll) out.push_back(v.scalar());
  return out;
}

}  // namespace chvt
