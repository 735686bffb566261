// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical code paths.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Scalar Gaussian KL(N(mq, sq^2) || N(mp, sp^2)), written out directly.
inline double scalar_kl(double mq, double sq, double mp, double sp) {
  return std::log(sp / sq) + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5;
}

/// Nelder-Mead simplex minimiser in two dimensions.
struct NelderMeadResult {
  std::array<double, 2> x;
  double f;
};

inline NelderMeadResult nelder_mead_2d(const std::function<double(double, double)>& f, std::array<double, 2> start,
                                       double step, int max_iter = 20000, double ftol = 1e-15) {
  std::array<std::array<double, 2>, 3> p = {start, start, start};
  p[1][0] += step;
  p[2][1] += step;
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) v[i] = f(p[i][0], p[i][1]);
  for (int it = 0; it < max_iter; ++it) {
    std::array<int, 3> idx = {0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    auto P = p;
    auto V = v;
    for (int i = 0; i < 3; ++i) {
      p[i] = P[idx[i]];
      v[i] = V[idx[i]];
    }
    if (std::abs(v[2] - v[0]) < ftol && std::abs(p[2][0] - p[0][0]) + std::abs(p[2][1] - p[0][1]) < 1e-12) break;
    const std::array<double, 2> c = {(p[0][0] + p[1][0]) / 2, (p[0][1] + p[1][1]) / 2};
    auto along = [&](double t) { return std::array<double, 2>{c[0] + t * (p[2][0] - c[0]), c[1] + t * (p[2][1] - c[1])}; };
    const auto r = along(-1.0);
    const double fr = f(r[0], r[1]);
    if (fr < v[0]) {
      const auto e = along(-2.0);
      const double fe = f(e[0], e[1]);
      if (fe < fr) {
        p[2] = e;
        v[2] = fe;
      } else {
        p[2] = r;
        v[2] = fr;
      }
    } else if (fr < v[1]) {
      p[2] = r;
      v[2] = fr;
    } else {
      const auto k = fr < v[2] ? along(-0.5) : along(0.5);
      const double fk = f(k[0], k[1]);
      if (fk < std::min(fr, v[2])) {
        p[2] = k;
        v[2] = fk;
      } else {
        for (int i = 1; i < 3; ++i) {
          p[i] = {(p[i][0] + p[0][0]) / 2, (p[i][1] + p[0][1]) / 2};
          v[i] = f(p[i][0], p[i][1]);
        }
      }
    }
  }
  int best = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
  return {p[best], v[best]};
}

/// Minimum over (mu', log sigma') of sum_i KL(N(mu_i, s_i^2) || N(mu', sigma'^2)),
/// found numerically with restarts.
inline double min_summed_kl(const std::vector<double>& mus, const std::vector<double>& sigmas) {
  auto objective = [&](double m, double log_s) {
    const double s = std::exp(log_s);
    double total = 0.0;
    for (std::size_t i = 0; i < mus.size(); ++i) total += scalar_kl(mus[i], sigmas[i], m, s);
    return total;
  };
  double best = 1e300;
  std::array<double, 2> start = {0.0, 0.0};
  for (int restart = 0; restart < 4; ++restart) {
    const auto r = nelder_mead_2d(objective, start, restart == 0 ? 1.0 : 0.1);
    best = std::min(best, r.f);
    start = r.x;
  }
  return best;
}

/// Central finite difference of f at x along coordinate set/get accessors.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

}  // namespace oracle
