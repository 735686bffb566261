// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "chvt/model.hpp"

namespace chvt {

/// First and second moment estimates, one pair per parameter.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  void init(const ParameterSet& params) {
    m.clear();
    v.clear();
    for (const auto& p : params.all()) {
      m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
    t = 0;
  }
};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(ParameterSet& params, AdamState& state, double lr) const {
    if (state.m.size() != params.size()) state.init(params);
    ++state.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = params[i];
      if (p.frozen || p.grad.size() == 0) continue;
      state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * p.grad;
      state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
    }
  }
};

/// Linear warmup over the first `warmup_steps`, constant afterwards.
inline double warmup_lr(double base, std::int64_t step, std::int64_t warmup_steps) {
  if (warmup_steps <= 0) return base;
  return base * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
}

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.all()) {
    if (p.grad.size()) sq += p.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params.all()) {
      if (p.grad.size()) p.grad *= s;
    }
  }
  return norm;
}

}  // namespace chvt
