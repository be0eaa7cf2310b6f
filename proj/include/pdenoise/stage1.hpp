#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "pdenoise/core.hpp"
#include "pdenoise/kernel.hpp"
#include "pdenoise/meanfield.hpp"
#include "pdenoise/parallel.hpp"

namespace pdenoise {

struct Snapshot {
  std::size_t depth = 0;
  double time = 0.0;
  ParticleSet particles;
};

/// Recorded Stage 1 states. Depths are strictly increasing from 0 and
/// snapshot 0 is the initial set.
struct Trajectory {
  std::vector<Snapshot> snapshots;
  FlowSchedule schedule;

  const Snapshot& at_depth(std::size_t depth) const {
    for (const auto& s : snapshots)
      if (s.depth == depth) return s;
    throw SnapshotNotFound("no snapshot recorded at depth " + std::to_string(depth));
  }
  bool has_depth(std::size_t depth) const {
    for (const auto& s : snapshots)
      if (s.depth == depth) return true;
    return false;
  }
  const Snapshot& final() const { return snapshots.back(); }
};

struct TruncationReport {
  double radius = std::numeric_limits<double>::infinity();
  std::size_t retained = 0;
  std::size_t dropped = 0;
  std::vector<std::size_t> retained_indices;
};

/// One synchronous leaky-residual layer: z_i <- (1-eta) z_i + eta F(z_i), with
/// every barycenter computed against the pre-update state.
inline ParticleSet stage1_step(const ParticleSet& state, double beta, double eta, Parallelism par = {}) {
  require_nonempty(state, "stage1_step");
  detail::check_beta(beta, "stage1_step");
  if (!(eta > 0.0 && eta < 1.0)) throw ValidationError("stage1_step: eta must lie in (0, 1)");
  const detail::ContextSoA soa(state);
  const std::size_t n = state.count();
  const std::size_t d = state.dim();
  const auto& src = state.data();
  std::vector<double> next(n * d);
  const double keep = 1.0 - eta;
  parallel_for(n, par.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<double> w(n);
    std::vector<double> f(d);
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = detail::kernel_row(soa, state.point(i), beta, w.data());
      detail::weighted_mean(soa, w.data(), row.sum, f.data());
      for (std::size_t k = 0; k < d; ++k) {
        const double z = keep * src[i * d + k] + eta * f[k];
        // A convex combination can round one ulp past the hull.
        next[i * d + k] = std::clamp(z, soa.lo(k), soa.hi(k));
      }
    }
  });
  return ParticleSet(d, std::move(next));
}

namespace detail {

inline Trajectory run_layers(const ParticleSet& init, const FlowSchedule& schedule,
                             std::size_t layers, std::size_t snapshot_every, Parallelism par) {
  Trajectory traj;
  traj.schedule = schedule;
  traj.snapshots.push_back({0, 0.0, init});
  ParticleSet state = init;
  for (std::size_t layer = 1; layer <= layers; ++layer) {
    state = stage1_step(state, schedule.beta, schedule.eta, par);
    const bool keep = layer == layers || layer == schedule.layers_to_horizon ||
                      (snapshot_every > 0 && layer % snapshot_every == 0);
    if (keep) traj.snapshots.push_back({layer, schedule.time_at(layer), state});
  }
  return traj;
}

}  // namespace detail

/// Runs the Stage 1 flow for `schedule.total_layers` layers, or `stop_layer`
/// layers when given. Snapshots are kept at depth 0, every `snapshot_every`
/// layers (0 disables), at L0 and at the last layer.
inline Trajectory run_stage1(const ParticleSet& init, const DenoiseConfig& config,
                             std::size_t snapshot_every = 0,
                             std::optional<std::size_t> stop_layer = std::nullopt,
                             Parallelism par = {}) {
  require_nonempty(init, "run_stage1");
  config.validate();
  const FlowSchedule schedule = config.schedule();
  const std::size_t layers = stop_layer ? *stop_layer : schedule.total_layers;
  return detail::run_layers(init, schedule, layers, snapshot_every, par);
}

/// Keeps the points with Euclidean norm <= radius, in their original order.
inline std::pair<ParticleSet, TruncationReport> hard_truncate(const ParticleSet& init, double radius) {
  require_nonempty(init, "hard_truncate");
  if (!(radius > 0.0)) throw ValidationError("hard_truncate: radius must be positive");
  TruncationReport report;
  report.radius = radius;
  for (std::size_t i = 0; i < init.count(); ++i) {
    double sq = 0.0;
    for (double v : init.point(i)) sq += v * v;
    if (std::sqrt(sq) <= radius) report.retained_indices.push_back(i);
  }
  report.retained = report.retained_indices.size();
  report.dropped = init.count() - report.retained;
  if (report.retained == 0)
    throw EmptyAfterTruncation("no points inside radius " + std::to_string(radius) +
                               "; increase the radius or resample");
  if (report.dropped == 0) return {init, std::move(report)};
  return {init.subset(report.retained_indices), std::move(report)};
}

/// Automatic truncation radius for a noisy cloud whose law is unknown: the
/// Gaussian-tail radius evaluated at the cloud's sample mean and the largest
/// eigenvalue of its unbiased sample covariance.
inline double empirical_auto_radius(const ParticleSet& noisy) {
  const std::size_t n = noisy.count();
  if (n < 2) throw ValidationError("automatic truncation needs at least 2 points");
  const auto d = static_cast<Eigen::Index>(noisy.dim());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) mean(k) += noisy(i, static_cast<std::size_t>(k));
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd c(d);
    for (Eigen::Index k = 0; k < d; ++k) c(k) = noisy(i, static_cast<std::size_t>(k)) - mean(k);
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  const double lam = std::max(eig.eigenvalues().maxCoeff(), std::numeric_limits<double>::min());
  return auto_radius(n, lam, mean.norm());
}

/// Radius selected by a truncation policy; infinite for Mode::none.
inline double truncation_radius(const Truncation& policy, const ParticleSet& noisy) {
  switch (policy.mode) {
    case Truncation::Mode::none: return std::numeric_limits<double>::infinity();
    case Truncation::Mode::automatic: return empirical_auto_radius(noisy);
    case Truncation::Mode::radius: return policy.radius;
  }
  return std::numeric_limits<double>::infinity();
}

/// Hard truncation of the initial cloud followed by run_stage1 on the
/// retained points.
inline std::pair<Trajectory, TruncationReport> run_truncated(
    const ParticleSet& init, const DenoiseConfig& config, std::size_t snapshot_every = 0,
    std::optional<std::size_t> stop_layer = std::nullopt, Parallelism par = {}) {
  if (config.truncation.mode == Truncation::Mode::none)
    throw ValidationError("run_truncated: truncation policy is 'none'");
  auto [kept, report] = hard_truncate(init, truncation_radius(config.truncation, init));
  return {run_stage1(kept, config, snapshot_every, stop_layer, par), std::move(report)};
}

}  // namespace pdenoise
