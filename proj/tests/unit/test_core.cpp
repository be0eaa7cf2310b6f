#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pdenoise/core.hpp"

using namespace pdenoise;

TEST(ParticleSet, RejectsNonFiniteAndEmpty) {
  EXPECT_THROW(ParticleSet(1, {0.0, std::nan("")}), ValidationError);
  EXPECT_THROW(ParticleSet(2, {0.0, std::numeric_limits<double>::infinity()}), ValidationError);
  EXPECT_THROW(ParticleSet(2, {}), ValidationError);
  EXPECT_THROW(ParticleSet(2, {1.0, 2.0, 3.0}), ValidationError);
  EXPECT_THROW(ParticleSet(0, {1.0}), ValidationError);
}

TEST(ParticleSet, AccessorsAndSubsets) {
  const auto p = ParticleSet::from_points({{0.0, 1.0}, {2.0, 3.0}, {4.0, 5.0}});
  EXPECT_EQ(p.dim(), 2u);
  EXPECT_EQ(p.count(), 3u);
  EXPECT_EQ(p(2, 1), 5.0);
  EXPECT_EQ(p.subset(std::vector<std::size_t>{2, 0}), ParticleSet::from_points({{4.0, 5.0}, {0.0, 1.0}}));
  EXPECT_EQ(p.prefix(1), ParticleSet::from_points({{0.0, 1.0}}));
  EXPECT_EQ(p.translated(std::vector<double>{1.0, -1.0})(1, 0), 3.0);
}

TEST(ValidateMixture, AcceptsTwoClusterPrior) {
  const auto mix = validate_mixture(symmetric_two_cluster_prior(2, 0.1));
  EXPECT_EQ(mix.size(), 2u);
  EXPECT_EQ(mix.kinds[0], ComponentKind::isotropic);
  EXPECT_NEAR(mix.covariances[1](1, 1), 0.01, 1e-15);
}

TEST(ValidateMixture, AcceptsPointMass) {
  GaussianMixture m;
  m.add_isotropic(1.0, {0.0}, 0.0);
  const auto v = validate_mixture(m);
  EXPECT_EQ(v.kinds[0], ComponentKind::point_mass);
}

TEST(ValidateMixture, RejectsBadWeightSum) {
  GaussianMixture m;
  m.add_point_mass(0.6, {0.0});
  m.add_point_mass(0.6, {1.0});
  try {
    validate_mixture(m);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sum"), std::string::npos);
  }
}

TEST(ValidateMixture, RenormalizesTinyDeviation) {
  GaussianMixture m;
  m.add_point_mass(0.5 + 5e-10, {0.0});
  m.add_point_mass(0.5, {1.0});
  const auto v = validate_mixture(m);
  EXPECT_NEAR(v.weights[0] + v.weights[1], 1.0, 1e-15);
}

TEST(ValidateMixture, Idempotent) {
  GaussianMixture m;
  m.add_point_mass(0.3 + 3e-10, {0.0, 0.0});
  m.add_isotropic(0.7, {1.0, 2.0}, 0.25);
  Matrix full(2, 2);
  full << 1.0, 0.3, 0.3, 0.5;
  m.add_full(0.0, {0.0, 1.0}, full);
  const auto once = validate_mixture(m);
  const auto twice = validate_mixture(once);
  EXPECT_EQ(once.weights, twice.weights);
  EXPECT_EQ(once.means, twice.means);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.covariances[i], twice.covariances[i]);
}

TEST(ValidateMixture, RejectsAsymmetricAndIndefinite) {
  GaussianMixture asym;
  Matrix a(2, 2);
  a << 1.0, 0.1, 0.0, 1.0;
  asym.add_full(1.0, {0.0, 0.0}, a);
  EXPECT_THROW(validate_mixture(asym), ValidationError);

  GaussianMixture indef;
  Matrix b(2, 2);
  b << 1.0, 0.0, 0.0, -0.1;
  indef.add_full(1.0, {0.0, 0.0}, b);
  EXPECT_THROW(validate_mixture(indef), ValidationError);

  GaussianMixture neg;
  neg.add_point_mass(-0.5, {0.0});
  neg.add_point_mass(1.5, {1.0});
  EXPECT_THROW(validate_mixture(neg), ValidationError);

  GaussianMixture mixed_dims;
  mixed_dims.add_point_mass(0.5, {0.0});
  mixed_dims.add_point_mass(0.5, {1.0, 2.0});
  EXPECT_THROW(validate_mixture(mixed_dims), DimensionMismatch);
}

TEST(DeriveSchedule, Examples) {
  const auto a = derive_schedule(0.25, 100, 200, 3.0);
  EXPECT_DOUBLE_EQ(a.t_star, 0.125);
  EXPECT_DOUBLE_EQ(a.step_h, 6.25e-4);
  EXPECT_DOUBLE_EQ(a.eta, 0.0625);
  EXPECT_EQ(a.total_layers, 600u);
  EXPECT_EQ(a.layers_to_horizon, 200u);

  const auto b = derive_schedule(0.5, 20, 200, 1.0);
  EXPECT_DOUBLE_EQ(b.t_star, 0.25);
  EXPECT_DOUBLE_EQ(b.step_h, 1.25e-3);
  EXPECT_DOUBLE_EQ(b.eta, 0.025);
  EXPECT_EQ(b.total_layers, 200u);
}

TEST(DeriveSchedule, EtaAtLeastOneIsScheduleError) {
  try {
    derive_schedule(0.5, 2000, 200, 1.0);
    FAIL() << "expected ScheduleError";
  } catch (const ScheduleError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("eta = beta*sigma2/(2*L0) < 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2.5"), std::string::npos) << msg;
  }
  EXPECT_THROW(derive_schedule(0.5, 800, 200, 1.0), ScheduleError);  // eta == 1 exactly
}

TEST(DeriveSchedule, RejectsBadInputs) {
  EXPECT_THROW(derive_schedule(0.0, 1.0, 10, 1.0), ValidationError);
  EXPECT_THROW(derive_schedule(0.5, -1.0, 10, 1.0), ValidationError);
  EXPECT_THROW(derive_schedule(0.5, 1.0, 0, 1.0), ValidationError);
  EXPECT_THROW(derive_schedule(0.5, 1.0, 10, 0.5), ValidationError);
}

TEST(DeriveSchedule, PropertiesOverGrid) {
  for (double s2 : {0.01, 0.25, 0.5, 1.7, 4.0})
    for (double beta : {0.5, 3.0, 20.0, 100.0})
      for (std::size_t l0 : {50u, 200u, 1000u, 4096u}) {
        if (beta * s2 / (2.0 * static_cast<double>(l0)) >= 1.0) continue;
        const auto a = derive_schedule(s2, beta, l0, 2.5);
        const auto b = derive_schedule(s2, beta, l0, 2.5);
        EXPECT_EQ(a.t_star, s2 / 2.0);
        EXPECT_EQ(a.step_h, b.step_h);
        EXPECT_EQ(a.eta, b.eta);
        EXPECT_LE(std::abs(static_cast<double>(a.layers_to_horizon) * a.step_h - s2 / 2.0), 1e-15 * s2);
        EXPECT_GT(a.eta, 0.0);
        EXPECT_LT(a.eta, 1.0);
        EXPECT_GE(a.total_layers, a.layers_to_horizon);
        EXPECT_DOUBLE_EQ(a.time_at(a.layers_to_horizon), a.t_star);
      }
}

TEST(DenoiseConfig, Defaults) {
  DenoiseConfig c;
  c.sigma2 = 0.25;
  c.beta = 10.0;
  EXPECT_DOUBLE_EQ(c.effective_beta_c(), 4.0);
  EXPECT_EQ(c.effective_readout_depth(), 200u);
  EXPECT_DOUBLE_EQ(c.horizon_mult, 3.0);
  c.beta_c = 2.0;
  c.readout_depth = 7;
  EXPECT_DOUBLE_EQ(c.effective_beta_c(), 2.0);
  EXPECT_EQ(c.effective_readout_depth(), 7u);
  c.sigma2 = -1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ValueKind, RoundTrip) {
  for (auto k : {ValueKind::variance, ValueKind::mse, ValueKind::w1, ValueKind::count, ValueKind::gap})
    EXPECT_EQ(value_kind_from_string(to_string(k)), k);
  EXPECT_THROW(value_kind_from_string("bogus"), ParseError);
}

TEST(Errors, Categories) {
  EXPECT_EQ(ScheduleError("x").category(), ErrorCategory::validation);
  EXPECT_EQ(ScheduleError("x").name(), "ScheduleError");
  EXPECT_EQ(NumericFailure("x").category(), ErrorCategory::numeric);
  EXPECT_EQ(ParseError("x").category(), ErrorCategory::io);
  EXPECT_EQ(SingularCovariance("x").category(), ErrorCategory::numeric);
}
