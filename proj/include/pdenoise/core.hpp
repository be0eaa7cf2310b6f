#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pdenoise/errors.hpp"

namespace pdenoise {

using Vec = std::vector<double>;
using Matrix = Eigen::MatrixXd;

/// Ordered collection of N points in R^d, stored point-major in one buffer.
/// Every coordinate is finite; a non-default-constructed set has N >= 1.
class ParticleSet {
 public:
  ParticleSet() = default;

  ParticleSet(std::size_t dim, std::vector<double> flat) : dim_(dim), data_(std::move(flat)) {
    if (dim_ == 0) throw ValidationError("ParticleSet: dim must be positive");
    if (data_.empty() || data_.size() % dim_ != 0)
      throw ValidationError("ParticleSet: buffer size " + std::to_string(data_.size()) +
                            " is not a positive multiple of dim " + std::to_string(dim_));
    for (std::size_t k = 0; k < data_.size(); ++k) {
      if (!std::isfinite(data_[k]))
        throw ValidationError("ParticleSet: non-finite coordinate at point " +
                              std::to_string(k / dim_) + ", axis " + std::to_string(k % dim_));
    }
  }

  static ParticleSet from_points(const std::vector<Vec>& points) {
    if (points.empty()) throw ValidationError("ParticleSet: no points");
    const std::size_t d = points.front().size();
    std::vector<double> flat;
    flat.reserve(points.size() * d);
    for (const auto& p : points) {
      if (p.size() != d) throw DimensionMismatch("ParticleSet: ragged point list");
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return ParticleSet(d, std::move(flat));
  }

  /// Convenience for d = 1.
  static ParticleSet from_scalars(const std::vector<double>& values) {
    return ParticleSet(1, values);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }

  const std::vector<double>& data() const noexcept { return data_; }

  Vec point_vec(std::size_t i) const {
    auto p = point(i);
    return Vec(p.begin(), p.end());
  }

  /// Points at `indices`, in the given order.
  ParticleSet subset(std::span<const std::size_t> indices) const {
    std::vector<double> flat;
    flat.reserve(indices.size() * dim_);
    for (std::size_t i : indices) {
      auto p = point(i);
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return ParticleSet(dim_, std::move(flat));
  }

  /// First n points.
  ParticleSet prefix(std::size_t n) const {
    if (n == 0 || n > count()) throw ValidationError("ParticleSet::prefix: bad length");
    return ParticleSet(dim_, std::vector<double>(data_.begin(), data_.begin() + n * dim_));
  }

  ParticleSet translated(std::span<const double> shift) const {
    if (shift.size() != dim_) throw DimensionMismatch("ParticleSet::translated: shift dimension");
    std::vector<double> flat = data_;
    for (std::size_t i = 0; i < count(); ++i)
      for (std::size_t k = 0; k < dim_; ++k) flat[i * dim_ + k] += shift[k];
    return ParticleSet(dim_, std::move(flat));
  }

  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Throws DimensionMismatch unless `set` has dimension `dim`.
inline void require_dim(const ParticleSet& set, std::size_t dim, const char* where) {
  if (set.dim() != dim)
    throw DimensionMismatch(std::string(where) + ": dimension " + std::to_string(set.dim()) +
                            " does not match " + std::to_string(dim));
}

inline void require_nonempty(const ParticleSet& set, const char* where) {
  if (set.empty()) throw ValidationError(std::string(where) + ": empty particle set");
}

enum class ComponentKind { isotropic, full, point_mass };

inline const char* to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::isotropic: return "isotropic";
    case ComponentKind::full: return "full";
    case ComponentKind::point_mass: return "point-mass";
  }
  return "?";
}

/// Prior sum_i weights[i] * N(means[i], covariances[i]). A zero covariance is a
/// point mass. `kinds` tags the fast paths; covariances are always stored in
/// full.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Matrix> covariances;
  std::vector<ComponentKind> kinds;

  std::size_t size() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return means.empty() ? 0 : means.front().size(); }

  void add_isotropic(double weight, Vec mean, double variance) {
    const auto d = static_cast<Eigen::Index>(mean.size());
    weights.push_back(weight);
    covariances.push_back(Matrix::Identity(d, d) * variance);
    kinds.push_back(variance == 0.0 ? ComponentKind::point_mass : ComponentKind::isotropic);
    means.push_back(std::move(mean));
  }

  void add_point_mass(double weight, Vec mean) { add_isotropic(weight, std::move(mean), 0.0); }

  void add_full(double weight, Vec mean, Matrix covariance) {
    weights.push_back(weight);
    covariances.push_back(std::move(covariance));
    kinds.push_back(covariances.back().isZero(0.0) ? ComponentKind::point_mass
                                                   : ComponentKind::full);
    means.push_back(std::move(mean));
  }

  /// Per-coordinate variance of the mixture: trace(Cov[X]) / d.
  double per_coordinate_variance() const {
    const std::size_t d = dim();
    Vec mean(d, 0.0);
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t k = 0; k < d; ++k) mean[k] += weights[i] * means[i][k];
    double total = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double spread = covariances[i].trace();
      for (std::size_t k = 0; k < d; ++k) spread += (means[i][k] - mean[k]) * (means[i][k] - mean[k]);
      total += weights[i] * spread;
    }
    return total / static_cast<double>(d);
  }
};

/// Symmetric mixture of two isotropic Gaussians at (+-1, 0, ..., 0), the
/// standard bimodal test prior.
inline GaussianMixture symmetric_two_cluster_prior(std::size_t dim = 2, double a = 0.1) {
  GaussianMixture mix;
  Vec left(dim, 0.0), right(dim, 0.0);
  left[0] = -1.0;
  right[0] = 1.0;
  mix.add_isotropic(0.5, left, a * a);
  mix.add_isotropic(0.5, right, a * a);
  return mix;
}

inline GaussianMixture single_gaussian_prior(std::size_t dim, double variance, Vec mean = {}) {
  GaussianMixture mix;
  if (mean.empty()) mean.assign(dim, 0.0);
  mix.add_isotropic(1.0, std::move(mean), variance);
  return mix;
}

/// Checks every mixture invariant and returns the mixture with weights
/// renormalized when their sum is off by at most 1e-9.
inline GaussianMixture validate_mixture(GaussianMixture mix) {
  const std::size_t k = mix.weights.size();
  if (k == 0) throw ValidationError("mixture: no components");
  if (mix.means.size() != k || mix.covariances.size() != k)
    throw ValidationError("mixture: weights, means and covariances differ in length");
  if (mix.kinds.empty()) {
    for (const auto& c : mix.covariances)
      mix.kinds.push_back(c.isZero(0.0) ? ComponentKind::point_mass : ComponentKind::full);
  }
  if (mix.kinds.size() != k) throw ValidationError("mixture: kind tags differ in length");

  const std::size_t d = mix.means.front().size();
  if (d == 0) throw ValidationError("mixture: zero-dimensional mean");

  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = mix.weights[i];
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError("mixture: weight " + std::to_string(i) + " is negative or non-finite");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "mixture: weights sum to " << sum << ", not 1";
    throw ValidationError(os.str());
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    for (auto& w : mix.weights) w /= sum;
  }

  for (std::size_t i = 0; i < k; ++i) {
    const std::string tag = "mixture component " + std::to_string(i);
    if (mix.means[i].size() != d) throw DimensionMismatch(tag + ": mean dimension");
    for (double v : mix.means[i])
      if (!std::isfinite(v)) throw ValidationError(tag + ": non-finite mean");
    const Matrix& c = mix.covariances[i];
    if (c.rows() != static_cast<Eigen::Index>(d) || c.cols() != static_cast<Eigen::Index>(d))
      throw DimensionMismatch(tag + ": covariance is not d x d");
    if (!c.allFinite()) throw ValidationError(tag + ": non-finite covariance");
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ValidationError(tag + ": covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw ValidationError(tag + ": covariance is not positive semidefinite");
    switch (mix.kinds[i]) {
      case ComponentKind::point_mass:
        if (!c.isZero(0.0)) throw ValidationError(tag + ": point-mass tag with nonzero covariance");
        break;
      case ComponentKind::isotropic: {
        const Matrix iso = Matrix::Identity(c.rows(), c.cols()) * c(0, 0);
        if ((c - iso).cwiseAbs().maxCoeff() > 1e-12)
          throw ValidationError(tag + ": isotropic tag with non-isotropic covariance");
        break;
      }
      case ComponentKind::full: break;
    }
  }
  return mix;
}

/// Observation noise x~ = x + sqrt(sigma2) * z.
struct NoiseModel {
  double sigma2;

  explicit NoiseModel(double s2) : sigma2(s2) {
    if (!(s2 > 0.0) || !std::isfinite(s2)) throw ValidationError("noise variance must be positive");
  }
};

/// Integration schedule derived from (sigma2, beta, L0): horizon t* = sigma2/2,
/// step h = t*/L0 and per-layer residual weight eta = beta*h.
struct FlowSchedule {
  double t_star = 0.0;
  double step_h = 0.0;
  double eta = 0.0;
  std::size_t layers_to_horizon = 0;
  std::size_t total_layers = 0;
  double beta = 0.0;

  double time_at(std::size_t layer) const { return static_cast<double>(layer) * step_h; }

  friend bool operator==(const FlowSchedule&, const FlowSchedule&) = default;
};

inline FlowSchedule derive_schedule(double sigma2, double beta, std::size_t l0, double horizon_mult) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("schedule: sigma2 must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("schedule: beta must be positive");
  if (l0 < 1) throw ValidationError("schedule: l0 must be at least 1");
  if (!(horizon_mult >= 1.0) || !std::isfinite(horizon_mult))
    throw ValidationError("schedule: horizon_mult must be >= 1");

  FlowSchedule s;
  s.beta = beta;
  s.t_star = sigma2 / 2.0;
  s.layers_to_horizon = l0;
  s.step_h = s.t_star / static_cast<double>(l0);
  s.eta = beta * s.step_h;
  s.total_layers = static_cast<std::size_t>(std::llround(horizon_mult * static_cast<double>(l0)));
  if (!(s.eta < 1.0)) {
    std::ostringstream os;
    os.precision(6);
    os << "schedule requires eta = beta*sigma2/(2*L0) < 1, got eta = " << s.eta << " (beta=" << beta
       << ", sigma2=" << sigma2 << ", L0=" << l0 << ")";
    throw ScheduleError(os.str());
  }
  return s;
}

/// Hard-truncation policy for the Stage 1 context.
struct Truncation {
  enum class Mode { none, automatic, radius };
  Mode mode = Mode::none;
  double radius = 0.0;

  static Truncation none() { return {}; }
  static Truncation automatic() { return {Mode::automatic, 0.0}; }
  static Truncation fixed(double r) {
    if (!(r > 0.0)) throw ValidationError("truncation radius must be positive");
    return {Mode::radius, r};
  }
  friend bool operator==(const Truncation&, const Truncation&) = default;
};

/// User-facing run parameters. `beta_c` and `readout_depth` are optional;
/// unset means 1/sigma2 and L0 respectively.
struct DenoiseConfig {
  double sigma2 = 0.0;
  double beta = 0.0;
  std::optional<double> beta_c;
  std::size_t l0 = 200;
  double horizon_mult = 3.0;
  Truncation truncation;
  std::uint64_t seed = 0;
  std::optional<std::size_t> readout_depth;

  double effective_beta_c() const { return beta_c ? *beta_c : 1.0 / sigma2; }
  std::size_t effective_readout_depth() const { return readout_depth ? *readout_depth : l0; }

  FlowSchedule schedule() const { return derive_schedule(sigma2, beta, l0, horizon_mult); }

  void validate() const {
    (void)NoiseModel(sigma2);
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("config: beta must be positive");
    if (beta_c && !(*beta_c > 0.0)) throw ValidationError("config: beta_c must be positive");
    if (l0 < 1) throw ValidationError("config: l0 must be at least 1");
    if (!(horizon_mult >= 1.0)) throw ValidationError("config: horizon_mult must be >= 1");
    if (truncation.mode == Truncation::Mode::radius && !(truncation.radius > 0.0))
      throw ValidationError("config: truncation radius must be positive");
  }

  friend bool operator==(const DenoiseConfig&, const DenoiseConfig&) = default;
};

/// `gap` is a sup-norm distance between two posterior-mean maps.
enum class ValueKind { variance, mse, w1, count, gap };

inline const char* to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::variance: return "variance";
    case ValueKind::mse: return "mse";
    case ValueKind::w1: return "w1";
    case ValueKind::count: return "count";
    case ValueKind::gap: return "gap";
  }
  return "?";
}

inline ValueKind value_kind_from_string(const std::string& s) {
  if (s == "variance") return ValueKind::variance;
  if (s == "mse") return ValueKind::mse;
  if (s == "w1") return ValueKind::w1;
  if (s == "count") return ValueKind::count;
  if (s == "gap") return ValueKind::gap;
  throw ParseError("unknown value kind '" + s + "'");
}

/// One experiment sample. `sweep_value` is the swept parameter of the cell
/// that produced it. `value` is NaN only for failed harness cells.
struct MetricsRecord {
  std::string label;
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  std::size_t depth_index = 0;
  double time = 0.0;
  ValueKind value_kind = ValueKind::mse;
  double value = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Worker count for the internally parallel loops. Never affects results.
struct Parallelism {
  unsigned workers = 1;
};

}  // namespace pdenoise
