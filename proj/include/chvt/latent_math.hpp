// SPDX-License-Identifier: Apache-2.0
//
// Closed-form algebra on diagonal Gaussians: KL divergence, additive mixing,
// reparameterised sampling, the minimum summed KL of a one-to-many group and
// its nonnegative-mean upper bound, and the relaxed KL built on that bound.
//
// Everything here is a pure function of its arguments and runs in double
// precision.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chvt/errors.hpp"

namespace chvt::latent {

using Vector = Eigen::VectorXd;

struct DiagGaussian {
  Vector mu;
  Vector log_var;

  DiagGaussian() = default;
  DiagGaussian(Vector m, Vector lv) : mu(std::move(m)), log_var(std::move(lv)) { validate(); }

  static DiagGaussian standard(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Zero(dim)}; }

  Eigen::Index dim() const { return mu.size(); }
  Vector variance() const { return log_var.array().exp().matrix(); }
  Vector stddev() const { return (0.5 * log_var.array()).exp().matrix(); }

  void validate() const {
    require(mu.size() >= 1, "DiagGaussian: dimension must be >= 1");
    require(mu.size() == log_var.size(), "DiagGaussian: mu and log_var dimensions differ");
    require(log_var.allFinite(), "DiagGaussian: log_var must be finite");
  }

  bool operator==(const DiagGaussian& o) const { return mu == o.mu && log_var == o.log_var; }
};

struct MixtureSpec {
  std::vector<DiagGaussian> components;
  Vector weights;

  void validate() const {
    require(!components.empty(), "MixtureSpec: at least one component required");
    require(weights.size() == static_cast<Eigen::Index>(components.size()),
            "MixtureSpec: one weight per component required");
    const Eigen::Index d = components.front().dim();
    for (const auto& c : components) {
      c.validate();
      require(c.dim() == d, "MixtureSpec: components must share a dimension");
    }
    require((weights.array() >= 0.0).all(), "MixtureSpec: weights must be nonnegative");
    require(std::abs(weights.sum() - 1.0) <= 1e-9, "MixtureSpec: weights must sum to 1");
  }

  static MixtureSpec uniform(std::vector<DiagGaussian> comps) {
    const auto n = static_cast<Eigen::Index>(comps.size());
    require(n >= 1, "MixtureSpec: at least one component required");
    return {std::move(comps), Vector::Constant(n, 1.0 / static_cast<double>(n))};
  }
};

/// KL(q || p), summed over dimensions.
inline double diag_gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  require(q.dim() == p.dim(), "diag_gaussian_kl: dimension mismatch");
  const auto ratio = (q.log_var - p.log_var).array().exp();
  const auto dmu = (q.mu - p.mu).array();
  const double kl =
      0.5 * (p.log_var.array() - q.log_var.array() + ratio + dmu.square() * (-p.log_var.array()).exp() - 1.0).sum();
  return kl < 0.0 ? 0.0 : kl;  // rounding near q == p
}

/// N(sum w_i mu_i, prod sigma_i^{2 w_i}).
inline DiagGaussian additive_mix(const MixtureSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.components.front().dim();
  Vector mu = Vector::Zero(d);
  Vector lv = Vector::Zero(d);
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    const double w = spec.weights(static_cast<Eigen::Index>(i));
    mu += w * spec.components[i].mu;
    lv += w * spec.components[i].log_var;
  }
  return {std::move(mu), std::move(lv)};
}

/// z = mu + exp(log_var / 2) * noise
inline Vector reparameterize(const DiagGaussian& d, const Vector& noise) {
  require(noise.size() == d.dim(), "reparameterize: noise dimension mismatch");
  return d.mu + d.stddev().cwiseProduct(noise);
}

/// Minimum over a shared prior of the summed KL from n posteriors of one
/// context, for a single latent dimension:
///   (n/2) log(1 + var(mu) / mean(sigma)^2)
/// Exact when all sigma_i are equal.
inline double xi_minimum(std::span<const double> mus, std::span<const double> sigmas) {
  require(!mus.empty(), "xi_minimum: need at least one posterior");
  require(mus.size() == sigmas.size(), "xi_minimum: mus and sigmas differ in length");
  for (double s : sigmas) require(s > 0.0 && std::isfinite(s), "xi_minimum: sigmas must be positive");
  if (std::all_of(mus.begin(), mus.end(), [&](double m) { return m == mus.front(); })) return 0.0;
  const double n = static_cast<double>(mus.size());
  const double mu_bar = std::accumulate(mus.begin(), mus.end(), 0.0) / n;
  const double sigma_bar = std::accumulate(sigmas.begin(), sigmas.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : mus) ss += (m - mu_bar) * (m - mu_bar);
  return 0.5 * n * std::log1p((ss / n) / (sigma_bar * sigma_bar));
}

/// Upper bound on xi_minimum when every posterior mean is nonnegative:
///   (n/2) log(1 + (n - 1) (mu_bar / sigma_bar)^2)
inline double eta_bound(double mu_bar, double sigma_bar, std::int64_t n) {
  require(n >= 1, "eta_bound: n must be >= 1");
  require(sigma_bar > 0.0 && std::isfinite(sigma_bar), "eta_bound: sigma_bar must be positive");
  const double nn = static_cast<double>(n);
  const double r = mu_bar / sigma_bar;
  return 0.5 * nn * std::log1p((nn - 1.0) * r * r);
}

/// max(d_kl - eta / n, 0)
inline double relaxed_kl(double d_kl, double eta, std::int64_t n) {
  require(n >= 1, "relaxed_kl: n must be >= 1");
  require(d_kl >= 0.0 && eta >= 0.0, "relaxed_kl: inputs must be nonnegative");
  const double v = d_kl - eta / static_cast<double>(n);
  return v > 0.0 ? v : 0.0;
}

/// d relaxed_kl / d d_kl: 1 above the threshold, 0 in the clamped region.
inline double relaxed_kl_slope(double d_kl, double eta, std::int64_t n) {
  return d_kl - eta / static_cast<double>(n) > 0.0 ? 1.0 : 0.0;
}

struct MonteCarloEstimate {
  double mean;
  double standard_error;
};

inline double diag_gaussian_log_density(const DiagGaussian& d, const Vector& z) {
  constexpr double log_2pi = 1.8378770664093453;
  const auto diff = (z - d.mu).array();
  return -0.5 * (log_2pi + d.log_var.array() + diff.square() * (-d.log_var.array()).exp()).sum();
}

/// Monte-Carlo estimate of E_q[log q(z) - log p(z)]. Test oracle for
/// diag_gaussian_kl; draws directly from q without the reparameterisation path.
inline MonteCarloEstimate mc_kl_oracle(const DiagGaussian& q, const DiagGaussian& p, std::int64_t samples,
                                       std::uint64_t seed = 0x5eed) {
  require(q.dim() == p.dim(), "mc_kl_oracle: dimension mismatch");
  require(samples >= 100000, "mc_kl_oracle: need at least 1e5 samples");
  std::mt19937_64 rng(seed);
  std::vector<std::normal_distribution<double>> dists;
  for (Eigen::Index k = 0; k < q.dim(); ++k) dists.emplace_back(q.mu(k), std::exp(0.5 * q.log_var(k)));
  Vector z(q.dim());
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t s = 0; s < samples; ++s) {
    for (Eigen::Index k = 0; k < q.dim(); ++k) z(k) = dists[static_cast<std::size_t>(k)](rng);
    const double x = diag_gaussian_log_density(q, z) - diag_gaussian_log_density(p, z);
    const double delta = x - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (x - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace chvt::latent
