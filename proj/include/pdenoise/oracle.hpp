#pragma once

// Closed-form Bayes baselines for Gaussian-mixture priors under isotropic
// Gaussian noise.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "pdenoise/core.hpp"
#include "pdenoise/parallel.hpp"
#include "pdenoise/random.hpp"

namespace pdenoise {

/// Posterior-mean map of a fixed mixture prior. Each component's
/// Sigma_i + sigma2 I is factored once at construction.
class GmmPosterior {
 public:
  GmmPosterior(const GaussianMixture& prior, double sigma2) : mix_(validate_mixture(prior)), sigma2_(sigma2) {
    (void)NoiseModel(sigma2);
    const auto d = static_cast<Eigen::Index>(mix_.dim());
    for (std::size_t i = 0; i < mix_.size(); ++i) {
      Component c;
      c.mean = Eigen::Map<const Eigen::VectorXd>(mix_.means[i].data(), d);
      c.log_weight = mix_.weights[i] > 0.0 ? std::log(mix_.weights[i]) : -std::numeric_limits<double>::infinity();
      c.kind = mix_.kinds[i];
      c.covariance = mix_.covariances[i];
      if (c.kind == ComponentKind::full) {
        Matrix s = c.covariance + sigma2_ * Matrix::Identity(d, d);
        c.chol.compute(s);
        if (c.chol.info() != Eigen::Success)
          throw SingularCovariance("component " + std::to_string(i) + ": Sigma + sigma2 I is not positive definite");
        c.log_det = 2.0 * c.chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
      } else {
        c.iso_var = (c.kind == ComponentKind::isotropic ? c.covariance(0, 0) : 0.0) + sigma2_;
        c.log_det = static_cast<double>(d) * std::log(c.iso_var);
      }
      comps_.push_back(std::move(c));
    }
  }

  std::size_t dim() const noexcept { return mix_.dim(); }
  double sigma2() const noexcept { return sigma2_; }

  /// Posterior component probabilities w_i(y), computed in log space.
  std::vector<double> responsibilities(std::span<const double> y) const {
    check(y);
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    std::vector<double> logw(comps_.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      logw[i] = comps_[i].log_weight + log_density(comps_[i], yv);
      mx = std::max(mx, logw[i]);
    }
    double sum = 0.0;
    for (double& l : logw) sum += (l = std::exp(l - mx));
    for (double& l : logw) l /= sum;
    return logw;
  }

  /// E[X | Y = y] = sum_i w_i(y) [mu_i + Sigma_i (Sigma_i + sigma2 I)^{-1} (y - mu_i)].
  Vec mean(std::span<const double> y) const {
    const auto w = responsibilities(y);
    const auto d = static_cast<Eigen::Index>(y.size());
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), d);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      if (w[i] == 0.0) continue;
      const Component& c = comps_[i];
      switch (c.kind) {
        case ComponentKind::point_mass: out += w[i] * c.mean; break;
        case ComponentKind::isotropic: {
          const double shrink = c.covariance(0, 0) / c.iso_var;
          out += w[i] * (c.mean + shrink * (yv - c.mean));
          break;
        }
        case ComponentKind::full: out += w[i] * (c.mean + c.covariance * c.chol.solve(yv - c.mean)); break;
      }
    }
    return Vec(out.data(), out.data() + d);
  }

 private:
  struct Component {
    Eigen::VectorXd mean;
    Matrix covariance;
    ComponentKind kind = ComponentKind::point_mass;
    double log_weight = 0.0;
    double iso_var = 0.0;
    double log_det = 0.0;
    Eigen::LLT<Matrix> chol;
  };

  void check(std::span<const double> y) const {
    if (y.size() != mix_.dim())
      throw DimensionMismatch("gmm posterior: query dimension " + std::to_string(y.size()) + " does not match " +
                              std::to_string(mix_.dim()));
  }

  static double log_density(const Component& c, const Eigen::Map<const Eigen::VectorXd>& y) {
    const double d = static_cast<double>(y.size());
    double quad;
    if (c.kind == ComponentKind::full) {
      const Eigen::VectorXd r = c.chol.matrixL().solve(y - c.mean);
      quad = r.squaredNorm();
    } else {
      quad = (y - c.mean).squaredNorm() / c.iso_var;
    }
    return -0.5 * (quad + c.log_det + d * std::log(2.0 * std::numbers::pi));
  }

  GaussianMixture mix_;
  double sigma2_;
  std::vector<Component> comps_;
};

inline Vec gmm_posterior_mean(const GaussianMixture& prior, double sigma2, std::span<const double> y) {
  return GmmPosterior(prior, sigma2).mean(y);
}

struct MmseEstimate {
  double mmse = 0.0;
  double stderr_ = 0.0;
};

/// Samples per Monte Carlo chunk in bayes_mmse; chunk c uses the stream
/// derive_seed(seed, "bayes_mmse", c).
inline constexpr std::size_t kMmseChunk = 8192;

/// Monte Carlo Bayes MMSE E|X - E[X|Y]|^2 with its standard error.
inline MmseEstimate bayes_mmse(const GaussianMixture& prior, double sigma2, std::size_t dim, std::size_t samples,
                               std::uint64_t seed, Parallelism par = {}) {
  if (samples < 1000) throw ValidationError("bayes_mmse: need at least 1000 samples");
  const GmmPosterior post(prior, sigma2);
  if (post.dim() != dim) throw ValidationError("bayes_mmse: prior dimension does not match dim");
  const GaussianMixture mix = validate_mixture(prior);
  std::vector<Matrix> roots(mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(mix.covariances[i]);
    roots[i] = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
               eig.eigenvectors().transpose();
  }
  const double noise = std::sqrt(sigma2);
  const std::size_t chunks = (samples + kMmseChunk - 1) / kMmseChunk;
  std::vector<double> sums(chunks), sq_sums(chunks);
  parallel_for(chunks, par.workers, [&](std::size_t cb, std::size_t ce, unsigned) {
    const auto d = static_cast<Eigen::Index>(dim);
    Eigen::VectorXd z(d), x(d);
    Vec y(dim);
    for (std::size_t c = cb; c < ce; ++c) {
      CounterRng rng(derive_seed(seed, "bayes_mmse", c));
      double s = 0.0, s2 = 0.0;
      const std::size_t end = std::min(samples, (c + 1) * kMmseChunk);
      for (std::size_t i = c * kMmseChunk; i < end; ++i) {
        const double u = rng.uniform();
        std::size_t comp = 0;
        double cum = mix.weights[0];
        while (comp + 1 < mix.size() && !(u < cum)) cum += mix.weights[++comp];
        for (Eigen::Index a = 0; a < d; ++a) z(a) = rng.normal();
        x = Eigen::Map<const Eigen::VectorXd>(mix.means[comp].data(), d) + roots[comp] * z;
        for (Eigen::Index a = 0; a < d; ++a) y[static_cast<std::size_t>(a)] = x(a) + noise * rng.normal();
        const Vec m = post.mean(y);
        double err = 0.0;
        for (Eigen::Index a = 0; a < d; ++a) {
          const double e = x(a) - m[static_cast<std::size_t>(a)];
          err += e * e;
        }
        s += err;
        s2 += err * err;
      }
      sums[c] = s;
      sq_sums[c] = s2;
    }
  });
  double total = 0.0, total_sq = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total += sums[c];
    total_sq += sq_sums[c];
  }
  const double n = static_cast<double>(samples);
  const double mean = total / n;
  const double var = std::max(0.0, (total_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

}  // namespace pdenoise
