#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdenoise/dataio.hpp"
#include "pdenoise/metrics.hpp"
#include "test_util.hpp"

using namespace pdenoise;
using testutil::random_cloud;

namespace {

/// Exhaustive minimum over permutations; only for tiny N.
double brute_force_w1(const ParticleSet& a, const ParticleSet& b) {
  std::vector<std::size_t> perm(a.count());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < a.count(); ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < a.dim(); ++k) sq += (a(i, k) - b(perm[i], k)) * (a(i, k) - b(perm[i], k));
      total += std::sqrt(sq);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.count());
}

}  // namespace

TEST(Mse, Examples) {
  const auto a = ParticleSet::from_points({{0.0, 0.0}, {1.0, 1.0}});
  const auto b = ParticleSet::from_points({{1.0, 0.0}, {1.0, 3.0}});
  EXPECT_DOUBLE_EQ(mse(a, b), 2.5);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_THROW(mse(a, ParticleSet::from_scalars({1.0, 2.0})), DimensionMismatch);
}

TEST(EmpiricalVariance, Examples) {
  EXPECT_DOUBLE_EQ(empirical_variance(ParticleSet::from_scalars({1.0, 3.0})), 2.0);
  EXPECT_DOUBLE_EQ(empirical_variance(ParticleSet::from_points({{0.0, 0.0}, {2.0, 4.0}})), 5.0);
  EXPECT_THROW(empirical_variance(ParticleSet::from_scalars({1.0})), TooFewPoints);
}

TEST(W1OneD, Examples) {
  EXPECT_DOUBLE_EQ(w1_1d(std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 3.0}), 1.0);
  EXPECT_DOUBLE_EQ(w1_1d(std::vector<double>{3.0, 0.0}, std::vector<double>{1.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(w1_1d(std::vector<double>{0.0}, std::vector<double>{0.0, 1.0}), 0.5);
  EXPECT_NEAR(w1_1d(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{0.0, 2.0}), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(w1_1d(std::vector<double>{}, std::vector<double>{1.0}), EmptyInput);
  EXPECT_THROW(w1_1d(std::vector<double>{NAN}, std::vector<double>{1.0}), ValidationError);
  EXPECT_THROW(w1_1d(random_cloud(3, 2, 1), random_cloud(3, 2, 2)), DimensionMismatch);
}

TEST(W1OneD, MatchesCdfIntegral) {
  // W1 = integral |F_a - F_b| dx for unequal sizes.
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = random_cloud(7 + s, 1, s).data();
    const auto b = random_cloud(11 + 2 * s, 1, s + 100, 1.5).data();
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    auto cdf = [](const std::vector<double>& v, double x) {
      return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double t) { return t <= x; })) /
             static_cast<double>(v.size());
    };
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
      integral += std::abs(cdf(a, all[i]) - cdf(b, all[i])) * (all[i + 1] - all[i]);
    EXPECT_NEAR(w1_1d(a, b), integral, 1e-12);
  }
}

TEST(W1Exact, AgreesWithBruteForce) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const std::size_t n = 2 + s % 6, d = 1 + s % 3;
    const auto a = random_cloud(n, d, s), b = random_cloud(n, d, s + 50, 1.3);
    EXPECT_NEAR(w1_exact_matching(a, b), brute_force_w1(a, b), 1e-12);
    if (d == 1) {
      EXPECT_NEAR(w1_exact_matching(a, b), w1_1d(a, b), 1e-12);
    }
  }
}

TEST(W1Exact, MetricProperties) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = random_cloud(40, 2, s), b = random_cloud(40, 2, s + 1), c = random_cloud(40, 2, s + 2, 2.0);
    EXPECT_NEAR(w1_exact_matching(a, b), w1_exact_matching(b, a), 1e-12);
    EXPECT_LE(w1_exact_matching(a, c), w1_exact_matching(a, b) + w1_exact_matching(b, c) + 1e-12);
    EXPECT_NEAR(w1_exact_matching(a, a), 0.0, 1e-15);
    const double sl = w1_sliced(a, b, 64, s);
    EXPECT_LE(sl, w1_exact_matching(a, b) + 1e-12);
  }
}

TEST(W1Exact, Limits) {
  EXPECT_THROW(w1_exact_matching(random_cloud(513, 1, 1), random_cloud(513, 1, 2)), TooLarge);
  EXPECT_THROW(w1_exact_matching(random_cloud(3, 1, 1), random_cloud(4, 1, 2)), DimensionMismatch);
  EXPECT_THROW(w1_exact_matching(random_cloud(3, 1, 1), random_cloud(3, 2, 2)), DimensionMismatch);
}

TEST(W1Sliced, TranslationGivesTwoOverPi) {
  const auto a = random_cloud(200, 2, 3);
  const auto b = a.translated(std::vector<double>{1.0, 0.0});
  const auto st = w1_sliced_stats(a, b, 4096, 11);
  EXPECT_NEAR(st.value, 0.636619772368, 4.0 * st.stderr_);
}

TEST(W1Sliced, DeterminismAndOneD) {
  const auto a = random_cloud(300, 3, 4), b = random_cloud(250, 3, 5);
  const auto x = w1_sliced_stats(a, b, 100, 9, {1});
  const auto y = w1_sliced_stats(a, b, 100, 9, {4});
  EXPECT_EQ(x.value, y.value);
  EXPECT_EQ(x.stderr_, y.stderr_);
  EXPECT_NE(x.value, w1_sliced(a, b, 100, 10));
  const auto a1 = random_cloud(30, 1, 6), b1 = random_cloud(40, 1, 7);
  EXPECT_EQ(w1_sliced(a1, b1, 5, 1), w1_1d(a1, b1));
  EXPECT_EQ(w1_auto(a1, b1, 3), w1_1d(a1, b1));
  EXPECT_EQ(w1_auto(a, b, 3), w1_sliced(a, b, kDefaultProjections, 3));
  EXPECT_THROW(w1_sliced(a, b, 0, 1), ValidationError);
  EXPECT_THROW(w1_sliced(a, random_cloud(3, 2, 1), 10, 1), DimensionMismatch);
}

TEST(W1OneD, GaussianSamplesConverge) {
  const auto p = single_gaussian_prior(1, 1.0);
  double prev = 1e300;
  for (std::size_t n : {100u, 1000u, 10000u}) {
    double avg = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s)
      avg += w1_1d(sample_prior(p, n, 1, derive_seed(s, "a")), sample_prior(p, n, 1, derive_seed(s, "b"))) / 5.0;
    EXPECT_LT(avg, prev);
    prev = avg;
  }
  EXPECT_LT(prev, 0.03);
}
