// SPDX-License-Identifier: Apache-2.0
//
// Training loop. Each example is expanded over the K hybrid latents; only the
// branch with the smallest reconstruction loss is backpropagated. The KL term
// between the sentence-level posterior and prior mixtures is annealed in
// linearly, optionally relaxed by the batch estimate of the one-to-many bound.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chvt/autodiff.hpp"
#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/latent_math.hpp"
#include "chvt/model.hpp"
#include "chvt/optimizer.hpp"

namespace chvt {

using corpus::DialoguePair;

struct SelfSeparation {
  double loss = 0.0;
  int selected = 0;
};

/// Minimum branch loss and its index; ties go to the lowest index.
inline SelfSeparation self_separation(std::span<const double> branch_losses) {
  require(!branch_losses.empty(), "self_separation: need at least one branch");
  SelfSeparation best{branch_losses[0], 0};
  for (std::size_t j = 0; j < branch_losses.size(); ++j) {
    if (!std::isfinite(branch_losses[j])) {
      throw TrainingDiverged("branch " + std::to_string(j) + " loss is not finite", "");
    }
    if (branch_losses[j] < best.loss) best = {branch_losses[j], static_cast<int>(j)};
  }
  return best;
}

/// min(step / k_ann, 1) * lambda_max
inline double anneal_weight(std::int64_t step, std::int64_t k_ann, double lambda_max) {
  require(step >= 0, "anneal_weight: step must be >= 0");
  require(k_ann >= 1, "anneal_weight: k_ann must be >= 1");
  if (step >= k_ann) return lambda_max;
  return static_cast<double>(step) / static_cast<double>(k_ann) * lambda_max;
}

/// Sum over latent dimensions of eta_bound(batch mean of mu, batch mean of
/// sigma, b). Rows are examples.
inline double batch_eta(const Matrix& posterior_mus, const Matrix& posterior_sigmas) {
  require(posterior_mus.rows() >= 2, "batch_eta: batch must hold at least two examples");
  require(posterior_mus.rows() == posterior_sigmas.rows() && posterior_mus.cols() == posterior_sigmas.cols(),
          "batch_eta: mus and sigmas differ in shape");
  const std::int64_t b = posterior_mus.rows();
  double eta = 0.0;
  for (Eigen::Index k = 0; k < posterior_mus.cols(); ++k) {
    eta += latent::eta_bound(posterior_mus.col(k).mean(), posterior_sigmas.col(k).mean(), b);
  }
  return eta;
}

struct StepMetrics {
  std::int64_t step = 0;
  double j_ent = 0.0;
  double d_kl = 0.0;
  double d_rkl = 0.0;
  double eta = 0.0;
  double lambda = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<int> selected_branch_histogram;
  std::vector<int> selected;
};

inline std::string to_json_line(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << "{\"step\":" << m.step << ",\"j_ent\":" << m.j_ent << ",\"d_kl\":" << m.d_kl << ",\"d_rkl\":" << m.d_rkl
     << ",\"eta\":" << m.eta << ",\"lambda\":" << m.lambda << ",\"loss\":" << m.loss
     << ",\"grad_norm\":" << m.grad_norm << ",\"selected_branch_histogram\":[";
  for (std::size_t j = 0; j < m.selected_branch_histogram.size(); ++j) {
    os << (j ? "," : "") << m.selected_branch_histogram[j];
  }
  os << "]}";
  return os.str();
}

/// Graph nodes of one example's forward pass.
struct ExampleGraph {
  std::vector<Var> branch_nll;  // 1x1 each
  Var kl;                       // 1x1; invalid when the continuous latent is off
  TokenGaussians posterior;     // 1 x d_z sentence posterior
  TokenGaussians prior;         // 1 x d_z sentence prior
};

/// Where z_s comes from when building an example's graph.
enum class LatentDraw { posterior_sample, posterior_mean };

/// Builds the full CHVT forward for one pair: joint and context-only
/// encodings, latent heads, sentence mixtures, KL, and every branch's
/// teacher-forced negative log-likelihood.
inline ExampleGraph build_example(const ChvtModel& model, ForwardContext& f, const DialoguePair& pair,
                                  LatentDraw draw, std::mt19937_64* noise_rng) {
  const ModelConfig& cfg = model.config();
  Graph& g = f.graph();
  ExampleGraph out;
  const EncoderInput ctx_in = model.context_input(pair.context_ids);
  Var h_ctx = model.encode(f, ctx_in);

  Var z;
  if (cfg.use_clv) {
    const EncoderInput joint_in = model.joint_input(pair.context_ids, pair.response_ids);
    Var h_joint = model.encode(f, joint_in);
    Var post_rows = ChvtModel::head_rows(joint_in, h_joint);
    Var prior_rows = ChvtModel::head_rows(ctx_in, h_ctx);
    out.posterior = ChvtModel::mix(model.recognition(f, post_rows), model.mixing_weights(f, post_rows, true));
    out.prior = ChvtModel::mix(model.prior(f, prior_rows), model.mixing_weights(f, prior_rows, false));
    out.kl = ad::gaussian_kl(out.posterior.mu, out.posterior.log_var, out.prior.mu, out.prior.log_var);
    if (draw == LatentDraw::posterior_sample) {
      require(noise_rng != nullptr, "build_example: sampling needs a noise source");
      std::normal_distribution<double> nd(0.0, 1.0);
      Matrix eps(1, cfg.d_z());
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps(0, k) = nd(*noise_rng);
      z = ChvtModel::reparameterize(out.posterior, eps);
    } else {
      z = out.posterior.mu;
    }
  } else {
    z = g.constant(Matrix::Zero(1, cfg.d_z()));
  }

  for (int j = 0; j < cfg.branches(); ++j) {
    Var mem = ChvtModel::memory(h_ctx, model.hybrid_latent(f, z, j));
    out.branch_nll.push_back(ad::scale(ad::sum(model.response_log_probs(f, mem, pair.response_ids)), -1.0));
  }
  return out;
}

struct TrainState {
  std::int64_t step = 0;
  AdamState adam;
  std::mt19937_64 rng;
};

class Trainer {
 public:
  Trainer(ChvtModel model, TrainConfig cfg) : model_(std::move(model)), cfg_(cfg) {
    cfg_.validate();
    state_.rng.seed(cfg_.seed);
    state_.adam.init(model_.parameters());
  }

  const ChvtModel& model() const { return model_; }
  ChvtModel& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  std::int64_t warmup_steps() const {
    return static_cast<std::int64_t>(std::llround(cfg_.warmup_frac * static_cast<double>(cfg_.max_steps)));
  }

  /// Forward + backward over one batch without touching parameters;
  /// gradients are left in the model's parameter set.
  StepMetrics compute_gradients(std::span<const DialoguePair> batch) {
    require(!batch.empty(), "training_step: empty batch");
    const ModelConfig& mc = model_.config();
    const auto b = static_cast<std::int64_t>(batch.size());
    StepMetrics m;
    m.step = state_.step;
    m.lambda = anneal_weight(state_.step, cfg_.k_ann, cfg_.lambda_max);
    m.selected_branch_histogram.assign(static_cast<std::size_t>(mc.branches()), 0);

    model_.parameters().zero_grad();
    Graph g(true);
    ForwardContext f(g, model_.parameters(), true, &state_.rng, mc.dropout);

    std::vector<Var> selected_nll, kls;
    Matrix mus(b, mc.d_z()), sigmas(b, mc.d_z());
    for (std::int64_t i = 0; i < b; ++i) {
      ExampleGraph ex = build_example(model_, f, batch[static_cast<std::size_t>(i)], LatentDraw::posterior_sample,
                                      &state_.rng);
      std::vector<double> losses;
      for (const Var& v : ex.branch_nll) losses.push_back(v.scalar());
      SelfSeparation sel;
      try {
        sel = self_separation(losses);
      } catch (const TrainingDiverged& e) {
        throw TrainingDiverged("step " + std::to_string(state_.step) + ", example " + std::to_string(i) + ": " +
                                   e.what(),
                               "");
      }
      ++m.selected_branch_histogram[static_cast<std::size_t>(sel.selected)];
      m.selected.push_back(sel.selected);
      selected_nll.push_back(ex.branch_nll[static_cast<std::size_t>(sel.selected)]);
      if (ex.kl.valid()) {
        if (!std::isfinite(ex.kl.scalar())) {
          throw TrainingDiverged("step " + std::to_string(state_.step) + ": KL is not finite", "");
        }
        kls.push_back(ex.kl);
        mus.row(i) = ex.posterior.mu.value().row(0);
        sigmas.row(i) = (0.5 * ex.posterior.log_var.value().row(0).array()).exp().matrix();
      }
    }

    const double inv_b = 1.0 / static_cast<double>(b);
    Var j_ent = ad::scale(ad::sum(ad::concat_rows(selected_nll)), inv_b);
    m.j_ent = j_ent.scalar();
    Var loss = j_ent;
    if (!kls.empty()) {
      Var mean_kl = ad::scale(ad::sum(ad::concat_rows(kls)), inv_b);
      m.d_kl = mean_kl.scalar();
      m.eta = b >= 2 ? batch_eta(mus, sigmas) : 0.0;
      m.d_rkl = latent::relaxed_kl(m.d_kl, m.eta, b);
      Var kl_term = mean_kl;
      if (cfg_.kl_mode == KlMode::relaxed) {
        // eta enters as a constant threshold: no gradient through batch statistics
        kl_term = ad::clamp_min_zero(ad::add_scalar(mean_kl, -m.eta / static_cast<double>(b)));
      }
      loss = ad::add(loss, ad::scale(kl_term, m.lambda));
    }
    m.loss = loss.scalar();
    if (!std::isfinite(m.loss)) throw TrainingDiverged("step " + std::to_string(state_.step) + ": loss is not finite", "");
    g.backward(loss);
    return m;
  }

  /// One optimiser update on `batch`.
  StepMetrics training_step(std::span<const DialoguePair> batch) {
    StepMetrics m = compute_gradients(batch);
    m.grad_norm = clip_grad_norm(model_.parameters(), cfg_.grad_clip);
    if (!std::isfinite(m.grad_norm)) {
      throw TrainingDiverged("step " + std::to_string(state_.step) + ": gradient is not finite", "");
    }
    Adam{}.step(model_.parameters(), state_.adam, warmup_lr(cfg_.lr, state_.step, warmup_steps()));
    ++state_.step;
    return m;
  }

  /// Runs until `cfg.max_steps`. Batches walk a per-epoch permutation of
  /// `data` that depends only on the seed and the epoch index, so a run
  /// resumed at step s sees the same batches as an uninterrupted one.
  void fit(const std::vector<DialoguePair>& data, const std::function<void(const StepMetrics&)>& on_step = {}) {
    require(!data.empty(), "fit: empty training set");
    const auto n = static_cast<std::int64_t>(data.size());
    const std::int64_t b = std::min<std::int64_t>(cfg_.batch_size, n);
    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> order;
    std::vector<DialoguePair> batch;
    while (state_.step < cfg_.max_steps) {
      batch.clear();
      for (std::int64_t k = 0; k < b; ++k) {
        const std::int64_t pos = state_.step * b + k;
        if (pos / n != cached_epoch) {
          cached_epoch = pos / n;
          order = epoch_order(data.size(), cached_epoch);
        }
        batch.push_back(data[order[static_cast<std::size_t>(pos % n)]]);
      }
      StepMetrics m = training_step(batch);
      if (on_step) on_step(m);
    }
  }

  /// Permutation of 0..n-1 used for epoch `epoch`.
  std::vector<std::size_t> epoch_order(std::size_t n, std::int64_t epoch) const {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

 private:
  ChvtModel model_;
  TrainConfig cfg_;
  TrainState state_;
};

}  // namespace chvt
