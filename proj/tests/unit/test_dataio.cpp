#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "pdenoise/dataio.hpp"
#include "pdenoise/metrics.hpp"
#include "pdenoise/stage1.hpp"
#include "test_util.hpp"

using namespace pdenoise;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pdenoise_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void expect_same_mixture(const GaussianMixture& a, const GaussianMixture& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.weights[i], b.weights[i]);
    EXPECT_EQ(a.means[i], b.means[i]);
    EXPECT_EQ(a.kinds[i], b.kinds[i]);
    EXPECT_EQ(a.covariances[i], b.covariances[i]);
  }
}

}  // namespace

TEST(SamplePrior, DeterministicAndWorkerIndependent) {
  const auto prior = symmetric_two_cluster_prior(3, 0.2);
  const auto a = sample_prior(prior, 10000, 3, 42, {1});
  EXPECT_EQ(a, sample_prior(prior, 10000, 3, 42, {4}));
  EXPECT_NE(a, sample_prior(prior, 10000, 3, 43));
  EXPECT_EQ(a.count(), 10000u);
}

TEST(SamplePrior, PrefixProperty) {
  const auto prior = symmetric_two_cluster_prior(2, 0.1);
  const auto big = sample_prior(prior, 9000, 2, 5);
  for (std::size_t n : {1u, 100u, 4096u, 5000u}) {
    const auto small = sample_prior(prior, n, 2, 5);
    for (std::size_t i = 0; i < n * 2; ++i) ASSERT_EQ(small.data()[i], big.data()[i]);
  }
  const auto clean = sample_prior(prior, 9000, 2, 5);
  const auto noisy_big = corrupt(clean, 0.3, 6);
  std::vector<std::size_t> head(5000);
  for (std::size_t i = 0; i < 5000; ++i) head[i] = i;
  const auto noisy_small = corrupt(clean.subset(head), 0.3, 6);
  for (std::size_t i = 0; i < 10000; ++i) ASSERT_EQ(noisy_small.data()[i], noisy_big.data()[i]);
}

TEST(SamplePrior, ComponentFrequenciesAndMoments) {
  GaussianMixture prior;
  prior.add_point_mass(0.2, {-3.0});
  prior.add_isotropic(0.5, {0.0}, 0.25);
  prior.add_isotropic(0.3, {3.0}, 0.04);
  const std::size_t n = 200000;
  const auto x = sample_prior(prior, n, 1, 9);
  std::size_t low = 0, high = 0;
  for (double v : x.data()) {
    if (v == -3.0) ++low;
    if (v > 2.0) ++high;
  }
  const auto se = [&](double p) { return std::sqrt(p * (1 - p) / static_cast<double>(n)); };
  EXPECT_NEAR(static_cast<double>(low) / n, 0.2, 4 * se(0.2));
  EXPECT_NEAR(static_cast<double>(high) / n, 0.3, 4 * se(0.3));
  EXPECT_NEAR(empirical_variance(x), prior.per_coordinate_variance(), 0.03);
}

TEST(SamplePrior, FullCovariance) {
  Matrix s(2, 2);
  s << 1.0, 0.8, 0.8, 1.0;
  GaussianMixture prior;
  prior.add_full(1.0, {1.0, -1.0}, s);
  const auto x = sample_prior(prior, 100000, 2, 3);
  double m0 = 0, m1 = 0, c = 0;
  for (std::size_t i = 0; i < x.count(); ++i) m0 += x(i, 0), m1 += x(i, 1);
  m0 /= x.count();
  m1 /= x.count();
  for (std::size_t i = 0; i < x.count(); ++i) c += (x(i, 0) - m0) * (x(i, 1) - m1);
  c /= x.count() - 1;
  EXPECT_NEAR(m0, 1.0, 0.02);
  EXPECT_NEAR(m1, -1.0, 0.02);
  EXPECT_NEAR(c, 0.8, 0.02);
}

TEST(SamplePrior, Rejections) {
  const auto prior = single_gaussian_prior(2, 1.0);
  EXPECT_THROW(sample_prior(prior, 0, 2, 1), ValidationError);
  EXPECT_THROW(sample_prior(prior, 10, 3, 1), ValidationError);
  EXPECT_THROW(corrupt(testutil::random_cloud(4, 1, 1), 0.0, 1), ValidationError);
}

TEST(Corrupt, NoiseMoments) {
  const auto zero = ParticleSet(2, std::vector<double>(2 * 50000, 0.0));
  const auto y = corrupt(zero, 0.49, 11);
  EXPECT_NEAR(empirical_variance(y), 0.49, 0.01);
}

TEST(ParticleCsv, RoundTripIsExact) {
  const auto p = testutil::random_cloud(300, 3, 1, 1e3);
  EXPECT_EQ(particles_from_csv(particles_to_csv(p)), p);
  const auto tiny = ParticleSet::from_points({{5e-324, -0.1}, {1e308, 0.0}});
  EXPECT_EQ(particles_from_csv(particles_to_csv(tiny)), tiny);
  EXPECT_EQ(particles_to_csv(ParticleSet::from_scalars({0.5})), "x0\n0.5\n");
}

TEST(ParticleCsv, ParseErrors) {
  EXPECT_THROW(particles_from_csv(""), ParseError);
  EXPECT_THROW(particles_from_csv("x0,x1\n"), ParseError);
  EXPECT_THROW(particles_from_csv("a,b\n1,2\n"), ParseError);
  EXPECT_THROW(particles_from_csv("x0,x1\n1,2\n3\n"), ParseError);
  EXPECT_THROW(particles_from_csv("x0\nabc\n"), ParseError);
  EXPECT_THROW(particles_from_csv("x0\nnan\n"), ParseError);
  try {
    particles_from_csv("x0,x1\n1,2\n3\n", "cloud.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("cloud.csv:3"), std::string::npos);
  }
  EXPECT_EQ(particles_from_csv("x0\r\n1\r\n\r\n2\r\n"), ParticleSet::from_scalars({1.0, 2.0}));
}

TEST(ParticleCsv, FileIo) {
  const auto dir = scratch("particles");
  const auto p = testutil::random_cloud(20, 2, 2);
  save_particles(p, dir / "nested" / "p.csv");
  EXPECT_EQ(load_particles(dir / "nested" / "p.csv"), p);
  EXPECT_THROW(load_particles(dir / "missing.csv"), IoError);
}

TEST(TrajectoryIo, WritesIndex) {
  const auto dir = scratch("traj");
  DenoiseConfig c;
  c.sigma2 = 0.25;
  c.beta = 10.0;
  c.l0 = 10;
  c.horizon_mult = 1.0;
  const auto traj = run_stage1(testutil::random_cloud(20, 1, 3), c, 5);
  const auto files = save_trajectory(traj, dir);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(load_particles(dir / "snapshot_000005.csv"), traj.at_depth(5).particles);
  const auto index = read_text_file(dir / "index.csv");
  EXPECT_EQ(index.substr(0, 16), "depth,time,file\n");
  EXPECT_NE(index.find("10,0.125,snapshot_000010.csv"), std::string::npos);
}

TEST(MixtureJson, RoundTrip) {
  Matrix s(2, 2);
  s << 1.0, 0.2, 0.2, 0.5;
  GaussianMixture m;
  m.add_isotropic(0.25, {1.0, 2.0}, 0.3);
  m.add_full(0.5, {0.0, -1.0}, s);
  m.add_point_mass(0.25, {3.0, 3.0});
  expect_same_mixture(mixture_from_json(mixture_to_json(m)), m);
  expect_same_mixture(mixture_from_json(Json::parse(mixture_to_json(m).dump())), m);
}

TEST(MixtureJson, InfersKinds) {
  const auto m = mixture_from_json(Json::parse(
      R"({"weights": [0.5, 0.25, 0.25], "means": [[0], [1], [2]], "covariances": [0.5, 0, [[2.0]]]})"));
  EXPECT_EQ(m.kinds, (std::vector<ComponentKind>{ComponentKind::isotropic, ComponentKind::point_mass,
                                                 ComponentKind::full}));
}

TEST(MixtureJson, Errors) {
  EXPECT_THROW(mixture_from_json(Json::parse(R"({"weights": [1.0]})")), ParseError);
  EXPECT_THROW(mixture_from_json(Json::parse(R"({"weights": [1], "means": [[0, 0]], "covariances": [[[1]]]})")),
               ParseError);
  EXPECT_THROW(
      mixture_from_json(Json::parse(R"({"weights": [1], "means": [[0]], "covariances": [1], "kinds": ["wide"]})")),
      ParseError);
  EXPECT_THROW(mixture_from_json(Json::parse(R"({"weights": [0.3], "means": [[0]], "covariances": [1]})")),
               ValidationError);
  EXPECT_THROW(parse_json_text("{not json", "x.json"), ParseError);
}

TEST(ConfigJson, RoundTripAndDefaults) {
  DenoiseConfig c;
  c.sigma2 = 0.5;
  c.beta = 30.0;
  c.beta_c = 1.5;
  c.l0 = 120;
  c.horizon_mult = 2.0;
  c.truncation = Truncation::fixed(7.5);
  c.seed = 77;
  c.readout_depth = 40;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  c.truncation = Truncation::automatic();
  c.beta_c.reset();
  c.readout_depth.reset();
  EXPECT_EQ(config_from_json(Json::parse(config_to_json(c).dump())), c);

  const auto d = config_from_json(Json::parse(R"({"sigma2": 0.25, "beta": 10})"));
  EXPECT_EQ(d.l0, 200u);
  EXPECT_EQ(d.truncation, Truncation::none());
  EXPECT_FALSE(d.readout_depth.has_value());
}

TEST(ConfigJson, Errors) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"beta": 10})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sigma2": "x", "beta": 10})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sigma2": 0.25, "beta": 10, "truncation": "some"})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sigma2": 0.25, "beta": 10, "readout_depth": "late"})")),
               ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sigma2": -1, "beta": 10})")), ValidationError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"sigma2": 0.5, "beta": 2000, "l0": 200})")).schedule(), ScheduleError);
}
