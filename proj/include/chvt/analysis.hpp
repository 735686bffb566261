// SPDX-License-Identifier: Apache-2.0
//
// Posterior distance study: train a continuous-latent-only model and record,
// after every epoch, how far apart the sentence posteriors of a fixed probe
// batch are in mean and in variance.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/inference.hpp"
#include "chvt/model.hpp"
#include "chvt/training.hpp"

namespace chvt::analysis {

struct DistanceRecord {
  int epoch = 0;  // 0 is the untrained probe
  double mu_l1 = 0.0;
  double var_l1 = 0.0;
};

struct DistanceTrace {
  LatentSource variant = LatentSource::additive_mixing;
  DistanceRecord initial;
  std::vector<DistanceRecord> epochs;  // one per completed epoch, epoch = 1..E
};

/// Mean over unordered pairs i < j of sum_k |x_ik - x_jk|. Rows are items.
inline double mean_pairwise_l1(const Matrix& rows) {
  const Eigen::Index n = rows.rows();
  require(n >= 2, "mean_pairwise_l1: need at least two rows");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) total += (rows.row(i) - rows.row(j)).cwiseAbs().sum();
  }
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

/// Posterior sentence means and variances of each probe pair, one row each.
inline DistanceRecord probe_distances(const ChvtModel& model, const std::vector<corpus::DialoguePair>& probe,
                                      int epoch) {
  const int d = model.config().d_z();
  Matrix mu(static_cast<Eigen::Index>(probe.size()), d), var(static_cast<Eigen::Index>(probe.size()), d);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const DiagGaussian q = posterior_sentence_latent(model, probe[i].context_ids, probe[i].response_ids);
    mu.row(static_cast<Eigen::Index>(i)) = q.mu.transpose();
    var.row(static_cast<Eigen::Index>(i)) = q.variance().transpose();
  }
  return {epoch, mean_pairwise_l1(mu), mean_pairwise_l1(var)};
}

/// Fraction of the annealing horizon relative to the total number of steps.
inline constexpr double kStudyAnnealFraction = 0.3;

/// Model configuration used by the study: the discrete table is disabled
/// and the sentence latent comes from `variant`.
inline ModelConfig study_model_config(ModelConfig base, LatentSource variant) {
  base.use_clv = true;
  base.use_dlv = false;
  base.latent_source = variant;
  return base;
}

/// Deterministic subset of `pairs` of the requested size.
inline std::vector<corpus::DialoguePair> seeded_subset(const std::vector<corpus::DialoguePair>& pairs,
                                                       std::size_t size, std::uint64_t seed) {
  require(size <= pairs.size(), "posterior_distance_study: subset larger than the corpus (" + std::to_string(size) +
                                    " > " + std::to_string(pairs.size()) + ")");
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  std::vector<corpus::DialoguePair> out;
  out.reserve(size);
  for (auto i : idx) out.push_back(pairs[i]);
  return out;
}

struct StudyOptions {
  std::size_t subset_size = 2000;
  int epochs = 10;
  std::size_t probe_size = 64;
  std::uint64_t seed = 1;
};

/// Trains one study model and returns its distance trace. `on_epoch` sees
/// each record as it is produced.
inline DistanceTrace posterior_distance_study(const std::vector<corpus::DialoguePair>& train_pairs,
                                              const ModelConfig& base_model, TrainConfig train,
                                              LatentSource variant, const StudyOptions& opt,
                                              const std::function<void(const DistanceRecord&)>& on_epoch = {}) {
  require(opt.epochs >= 1, "posterior_distance_study: epochs must be >= 1");
  require(opt.probe_size >= 2, "posterior_distance_study: probe needs at least two pairs");
  const auto subset = seeded_subset(train_pairs, opt.subset_size, opt.seed);
  require(subset.size() >= opt.probe_size, "posterior_distance_study: probe larger than the subset");
  const std::vector<corpus::DialoguePair> probe(subset.begin(), subset.begin() + static_cast<std::ptrdiff_t>(opt.probe_size));

  const auto b = static_cast<std::size_t>(train.batch_size);
  const int steps_per_epoch = static_cast<int>((subset.size() + b - 1) / b);
  train.max_steps = steps_per_epoch * opt.epochs;
  train.k_ann = std::max(1, static_cast<int>(kStudyAnnealFraction * static_cast<double>(train.max_steps)));
  train.kl_mode = KlMode::vanilla;
  train.seed = opt.seed;

  Trainer trainer(ChvtModel(study_model_config(base_model, variant), opt.seed), train);
  DistanceTrace trace;
  trace.variant = variant;
  trace.initial = probe_distances(trainer.model(), probe, 0);

  std::vector<std::size_t> order(subset.size());
  for (int e = 1; e <= opt.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), trainer.state().rng);
    for (std::size_t start = 0; start < order.size(); start += b) {
      std::vector<corpus::DialoguePair> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + b); ++k) batch.push_back(subset[order[k]]);
      trainer.training_step(batch);
    }
    trace.epochs.push_back(probe_distances(trainer.model(), probe, e));
    if (on_epoch) on_epoch(trace.epochs.back());
  }
  return trace;
}

inline nlohmann::json to_json(const DistanceRecord& r) {
  return {{"epoch", r.epoch}, {"mu_l1", r.mu_l1}, {"var_l1", r.var_l1}};
}

inline nlohmann::json to_json(const DistanceTrace& t) {
  nlohmann::json j;
  j["variant"] = to_string(t.variant);
  j["initial"] = to_json(t.initial);
  j["epochs"] = nlohmann::json::array();
  for (const auto& r : t.epochs) j["epochs"].push_back(to_json(r));
  return j;
}

/// Two-panel line plot (mu distances left, variance distances right), one
/// polyline per variant.
inline std::string render_svg(const std::vector<DistanceTrace>& traces) {
  const double W = 360, H = 260, pad = 40;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * W << "\" height=\"" << H + 30 << "\">\n";
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = panel * W;
    double ymax = 0.0;
    int emax = 1;
    for (const auto& t : traces) {
      for (const auto& r : t.epochs) {
        ymax = std::max(ymax, panel == 0 ? r.mu_l1 : r.var_l1);
        emax = std::max(emax, r.epoch);
      }
    }
    if (ymax <= 0.0) ymax = 1.0;
    os << "<g>\n<rect x=\"" << x0 + pad << "\" y=\"" << pad / 2 << "\" width=\"" << W - 1.5 * pad << "\" height=\""
       << H - 1.5 * pad << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << x0 + W / 2 << "\" y=\"14\" text-anchor=\"middle\" font-size=\"12\">"
       << (panel == 0 ? "mean pairwise L1 of mu" : "mean pairwise L1 of sigma^2") << "</text>\n";
    os << "<text x=\"" << x0 + pad << "\" y=\"" << H + 5 << "\" font-size=\"10\">epoch 1</text>\n";
    os << "<text x=\"" << x0 + W - pad << "\" y=\"" << H + 5 << "\" font-size=\"10\" text-anchor=\"end\">epoch " << emax
       << "</text>\n";
    os << "<text x=\"" << x0 + 2 << "\" y=\"" << pad / 2 + 10 << "\" font-size=\"10\">" << ymax << "</text>\n";
    for (std::size_t v = 0; v < traces.size(); ++v) {
      os << "<polyline fill=\"none\" stroke=\"" << colors[v % 4] << "\" points=\"";
      for (const auto& r : traces[v].epochs) {
        const double fx = emax > 1 ? static_cast<double>(r.epoch - 1) / (emax - 1) : 0.0;
        const double val = panel == 0 ? r.mu_l1 : r.var_l1;
        os << x0 + pad + fx * (W - 1.5 * pad) << "," << pad / 2 + (1.0 - val / ymax) * (H - 1.5 * pad) << " ";
      }
      os << "\"/>\n";
      os << "<text x=\"" << x0 + W - pad - 4 << "\" y=\"" << pad + 14 * static_cast<double>(v) << "\" font-size=\"10\" "
         << "text-anchor=\"end\" fill=\"" << colors[v % 4] << "\">" << to_string(traces[v].variant) << "</text>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace chvt::analysis
