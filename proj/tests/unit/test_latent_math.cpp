// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "chvt/latent_math.hpp"
#include "oracles.hpp"

using namespace chvt;
using namespace chvt::latent;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

DiagGaussian random_gaussian(std::mt19937_64& rng, Eigen::Index d, double mu_range, double lv_range) {
  std::uniform_real_distribution<double> mu(-mu_range, mu_range), lv(-lv_range, lv_range);
  Vector m(d), l(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    m(k) = mu(rng);
    l(k) = lv(rng);
  }
  return {m, l};
}

}  // namespace

TEST(DiagGaussian, RejectsMismatchedAndNonFiniteFields) {
  EXPECT_THROW(DiagGaussian(vec({0, 1}), vec({0})), ContractError);
  EXPECT_THROW(DiagGaussian(vec({0}), vec({std::nan("")})), ContractError);
  EXPECT_THROW(DiagGaussian(Vector(0), Vector(0)), ContractError);
}

TEST(GaussianKl, IdenticalDistributionsGiveZero) {
  EXPECT_EQ(diag_gaussian_kl(DiagGaussian::standard(4), DiagGaussian::standard(4)), 0.0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto q = random_gaussian(rng, 5, 5, 3);
    EXPECT_EQ(diag_gaussian_kl(q, q), 0.0);
  }
}

TEST(GaussianKl, UnitShiftIsOneHalf) {
  EXPECT_NEAR(diag_gaussian_kl({vec({1}), vec({0})}, DiagGaussian::standard(1)), 0.5, 1e-15);
}

TEST(GaussianKl, WideVarianceAgainstStandard) {
  // q = N(0, e): 1/2 (e - 1 - 1)
  const DiagGaussian q(vec({0}), vec({1}));
  const double closed = diag_gaussian_kl(q, DiagGaussian::standard(1));
  EXPECT_NEAR(closed, 0.5 * (std::exp(1.0) - 2.0), 1e-14);
  const auto mc = mc_kl_oracle(q, DiagGaussian::standard(1), 1000000, 17);
  EXPECT_NEAR(mc.mean, closed, 1e-2);
}

TEST(GaussianKl, MatchesScalarOracleAndIsNonnegative) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10000; ++t) {
    const auto q = random_gaussian(rng, 3, 5, 3);
    const auto p = random_gaussian(rng, 3, 5, 3);
    double expected = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k) {
      expected += oracle::scalar_kl(q.mu(k), std::exp(0.5 * q.log_var(k)), p.mu(k), std::exp(0.5 * p.log_var(k)));
    }
    const double kl = diag_gaussian_kl(q, p);
    ASSERT_GT(kl, 0.0);
    ASSERT_NEAR(kl, expected, 1e-9 * std::max(1.0, expected));
  }
}

TEST(GaussianKl, DimensionMismatchIsAContractError) {
  EXPECT_THROW(diag_gaussian_kl(DiagGaussian::standard(2), DiagGaussian::standard(3)), ContractError);
}

TEST(AdditiveMix, SingleComponentIsIdentity) {
  const DiagGaussian g(vec({0.3, -1}), vec({0.2, 0.7}));
  EXPECT_EQ(additive_mix({{g}, vec({1.0})}), g);
}

TEST(AdditiveMix, IdenticalComponentsUnderAnyWeights) {
  const DiagGaussian g(vec({1.5, -2}), vec({-0.5, 0.25}));
  const DiagGaussian m = additive_mix({{g, g, g}, vec({0.2, 0.5, 0.3})});
  EXPECT_NEAR((m.mu - g.mu).norm(), 0.0, 1e-15);
  EXPECT_NEAR((m.log_var - g.log_var).norm(), 0.0, 1e-15);
}

TEST(AdditiveMix, HandComputedTwoComponentCase) {
  // N(0, 1) and N(2, e^2) with equal weights -> N(1, e)
  const DiagGaussian m = additive_mix(MixtureSpec::uniform({{vec({0}), vec({0})}, {vec({2}), vec({2})}}));
  EXPECT_DOUBLE_EQ(m.mu(0), 1.0);
  EXPECT_DOUBLE_EQ(m.log_var(0), 1.0);
  // product form: sigma^2 = prod sigma_i^{2 w_i} = 1^0.5 * (e^2)^0.5
  EXPECT_NEAR(m.variance()(0), std::pow(1.0, 0.5) * std::pow(std::exp(2.0), 0.5), 1e-14);
}

TEST(AdditiveMix, InvalidSpecsAreRejected) {
  EXPECT_THROW(additive_mix({{}, Vector(0)}), ContractError);
  const auto g = DiagGaussian::standard(2);
  EXPECT_THROW(additive_mix({{g, g}, vec({0.7, 0.7})}), ContractError);
  EXPECT_THROW(additive_mix({{g, g}, vec({1.5, -0.5})}), ContractError);
  EXPECT_THROW(additive_mix({{g, DiagGaussian::standard(3)}, vec({0.5, 0.5})}), ContractError);
}

TEST(Reparameterize, Examples) {
  const DiagGaussian g(vec({0.5, -1}), vec({0.3, -0.2}));
  EXPECT_EQ(reparameterize(g, Vector::Zero(2)), g.mu);
  const Vector eps = vec({0.7, -1.3});
  EXPECT_EQ(reparameterize(DiagGaussian::standard(2), eps), eps);
  EXPECT_DOUBLE_EQ(reparameterize({vec({3}), vec({std::log(4.0)})}, vec({1.5}))(0), 6.0);
  EXPECT_THROW(reparameterize(g, Vector::Zero(3)), ContractError);
}

TEST(Reparameterize, SampleMomentsMatch) {
  const DiagGaussian g(vec({1.2, -0.4}), vec({0.6, -1.1}));
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  const int n = 1000000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int s = 0; s < n; ++s) {
    const Vector z = reparameterize(g, vec({nd(rng), nd(rng)}));
    sum += z;
    sq += z.cwiseProduct(z);
  }
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double mean = sum(k) / n;
    const double var = sq(k) / n - mean * mean;
    const double sigma2 = g.variance()(k);
    EXPECT_NEAR(mean, g.mu(k), 4.0 * std::sqrt(sigma2 / n));
    EXPECT_NEAR(var, sigma2, 4.0 * sigma2 * std::sqrt(2.0 / n));
  }
}

TEST(XiMinimum, Examples) {
  const std::vector<double> same = {0.7, 0.7, 0.7}, sig = {0.5, 1.0, 2.0};
  EXPECT_EQ(xi_minimum(same, sig), 0.0);
  const std::vector<double> mu2 = {0, 2}, s2 = {1, 1};
  EXPECT_NEAR(xi_minimum(mu2, s2), std::log(2.0), 1e-15);
  EXPECT_NEAR(oracle::min_summed_kl({0, 2}, {1, 1}), std::log(2.0), 1e-8);
  const std::vector<double> mu3 = {0, 0, 3}, s3 = {2, 2, 2};
  EXPECT_NEAR(xi_minimum(mu3, s3), 1.5 * std::log(1.5), 1e-15);
  EXPECT_NEAR(oracle::min_summed_kl({0, 0, 3}, {2, 2, 2}), 1.5 * std::log(1.5), 1e-8);
}

TEST(XiMinimum, RejectsNonpositiveSigma) {
  const std::vector<double> mu = {0, 1}, bad = {1, 0};
  EXPECT_THROW(xi_minimum(mu, bad), ContractError);
  const std::vector<double> neg = {-1, 1};
  EXPECT_THROW(xi_minimum(mu, neg), ContractError);
}

TEST(XiMinimum, UnequalSigmaIsOnlyAnApproximation) {
  // The exact minimiser of the summed KL has mu' = mean(mu),
  // sigma'^2 = mean(sigma_i^2 + (mu_i - mu_bar)^2); xi uses mean(sigma)
  // instead, so the two differ once the sigmas differ.
  const std::vector<double> mu = {0, 1, 3}, sig = {0.5, 1.0, 2.0};
  const double numeric = oracle::min_summed_kl(mu, sig);
  EXPECT_GT(std::abs(xi_minimum(mu, sig) - numeric), 1e-3);
}

TEST(EtaBound, Examples) {
  EXPECT_EQ(eta_bound(5.0, 0.1, 1), 0.0);
  EXPECT_NEAR(eta_bound(1, 1, 2), std::log(2.0), 1e-15);
  EXPECT_NEAR(eta_bound(1, 2, 3), 1.5 * std::log(1.5), 1e-15);
  EXPECT_THROW(eta_bound(1, 0, 3), ContractError);
}

TEST(EtaBound, BoundsXiForNonnegativeMeans) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> nd(2, 8);
  std::uniform_real_distribution<double> mu(0.0, 5.0), sig(0.05, 3.0);
  for (int t = 0; t < 10000; ++t) {
    const int n = nd(rng);
    std::vector<double> mus(static_cast<std::size_t>(n)), sigmas(static_cast<std::size_t>(n), sig(rng));
    for (auto& m : mus) m = mu(rng);
    double mbar = 0;
    for (double m : mus) mbar += m / n;
    ASSERT_LE(xi_minimum(mus, sigmas), eta_bound(mbar, sigmas[0], n) + 1e-9);
  }
}

TEST(RelaxedKl, Examples) {
  EXPECT_NEAR(relaxed_kl(0.5, 0.9, 3), 0.2, 1e-15);
  EXPECT_EQ(relaxed_kl(0.1, 0.9, 3), 0.0);
  EXPECT_EQ(relaxed_kl(0.37, 0.0, 4), 0.37);
  EXPECT_EQ(relaxed_kl_slope(0.1, 0.9, 3), 0.0);
  EXPECT_EQ(relaxed_kl_slope(0.5, 0.9, 3), 1.0);
  EXPECT_THROW(relaxed_kl(-0.1, 0.0, 1), ContractError);
  EXPECT_THROW(relaxed_kl(0.1, 0.0, 0), ContractError);
}

TEST(McOracle, EqualDistributionsAreNearZero) {
  const DiagGaussian q(vec({0.3, -0.2}), vec({0.1, 0.4}));
  const auto mc = mc_kl_oracle(q, q, 100000, 1);
  EXPECT_EQ(mc.mean, 0.0);
  const auto shift = mc_kl_oracle({vec({1}), vec({0})}, DiagGaussian::standard(1), 1000000, 2);
  EXPECT_NEAR(shift.mean, 0.5, 0.01);
  EXPECT_THROW(mc_kl_oracle(q, q, 1000, 1), ContractError);
}
