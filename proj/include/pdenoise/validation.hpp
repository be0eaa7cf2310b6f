#pragma once

// Finite-(N, R, beta) recovery checks for single-Gaussian priors: evolve a
// truncated noisy cloud to depth L0 and compare it with the clean prior,
// either in W1 or through the posterior-mean map on a compact query region.

#include <cmath>
#include <cstdint>
#include <vector>

#include "pdenoise/core.hpp"
#include "pdenoise/dataio.hpp"
#include "pdenoise/metrics.hpp"
#include "pdenoise/oracle.hpp"
#include "pdenoise/stage1.hpp"
#include "pdenoise/stage2.hpp"

namespace pdenoise {

struct RecoveryCloud {
  ParticleSet evolved;
  TruncationReport truncation;
};

namespace detail {

inline void require_single_gaussian(const GaussianMixture& prior, const char* op) {
  if (validate_mixture(prior).size() != 1)
    throw ValidationError(std::string(op) + ": prior must be a single (possibly degenerate) Gaussian");
}

}  // namespace detail

/// Samples f0 = P0 * N(0, tau I), truncates the cloud and runs Stage 1 for
/// L0 layers (t = tau/2). Streams: "recovery_clean", "recovery_noise".
inline RecoveryCloud evolve_recovery_cloud(const GaussianMixture& prior, double tau, double beta, std::size_t n,
                                           const Truncation& radius_policy, std::uint64_t seed, std::size_t l0 = 200,
                                           Parallelism par = {}) {
  detail::require_single_gaussian(prior, "recovery check");
  const std::size_t d = prior.dim();
  const ParticleSet clean = sample_prior(prior, n, d, derive_seed(seed, "recovery_clean"), par);
  const ParticleSet noisy = corrupt(clean, tau, derive_seed(seed, "recovery_noise"), par);
  DenoiseConfig cfg;
  cfg.sigma2 = tau;
  cfg.beta = beta;
  cfg.l0 = l0;
  cfg.horizon_mult = 1.0;
  cfg.truncation = radius_policy;
  cfg.seed = seed;
  RecoveryCloud out;
  if (radius_policy.mode == Truncation::Mode::none) {
    out.evolved = run_stage1(noisy, cfg, 0, l0, par).at_depth(l0).particles;
    out.truncation.retained = n;
  } else {
    auto [traj, report] = run_truncated(noisy, cfg, 0, l0, par);
    out.evolved = traj.at_depth(l0).particles;
    out.truncation = std::move(report);
  }
  return out;
}

struct RecoveryRow {
  double beta = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t retained = 0;
  double w1 = 0.0;

  friend bool operator==(const RecoveryRow&, const RecoveryRow&) = default;
};

/// W1 between the evolved cloud and a fresh P0 sample of equal size (stream
/// "recovery_reference"), for every (beta, n, seed).
inline std::vector<RecoveryRow> recovery_trend_check(const GaussianMixture& prior, double tau,
                                                     const std::vector<double>& betas,
                                                     const std::vector<std::size_t>& ns,
                                                     const Truncation& radius_policy,
                                                     const std::vector<std::uint64_t>& seeds, std::size_t l0 = 200,
                                                     Parallelism par = {}) {
  detail::require_single_gaussian(prior, "recovery_trend_check");
  if (betas.empty() || ns.empty() || seeds.empty())
    throw ValidationError("recovery_trend_check: betas, ns and seeds must be nonempty");
  if (!std::is_sorted(betas.begin(), betas.end()) || !std::is_sorted(ns.begin(), ns.end()))
    throw ValidationError("recovery_trend_check: betas and ns must be nondecreasing");
  std::vector<RecoveryRow> rows;
  for (double beta : betas)
    for (std::size_t n : ns)
      for (std::uint64_t seed : seeds) {
        const RecoveryCloud cloud = evolve_recovery_cloud(prior, tau, beta, n, radius_policy, seed, l0, par);
        const std::size_t m = cloud.evolved.count();
        const ParticleSet ref = sample_prior(prior, m, prior.dim(), derive_seed(seed, "recovery_reference"), par);
        rows.push_back({beta, n, seed, m, w1_auto(cloud.evolved, ref, derive_seed(seed, "recovery_w1"), par)});
      }
  return rows;
}

/// Query grid with |y| <= M: 201 points on [-M, M] for d = 1; otherwise the
/// 201 x 201 grid on the first two coordinates (others zero), restricted to
/// the disc of radius M.
inline ParticleSet uniform_query_grid(std::size_t dim, double m_bound, std::size_t per_axis = 201) {
  if (!(m_bound > 0.0)) throw ValidationError("query grid bound must be positive");
  if (per_axis < 2) throw ValidationError("query grid needs at least 2 points per axis");
  auto node = [&](std::size_t i) {
    return -m_bound + 2.0 * m_bound * static_cast<double>(i) / static_cast<double>(per_axis - 1);
  };
  std::vector<double> flat;
  if (dim == 1) {
    for (std::size_t i = 0; i < per_axis; ++i) flat.push_back(node(i));
    return ParticleSet(1, std::move(flat));
  }
  for (std::size_t i = 0; i < per_axis; ++i)
    for (std::size_t j = 0; j < per_axis; ++j) {
      const double a = node(i), b = node(j);
      if (a * a + b * b > m_bound * m_bound * (1.0 + 1e-12)) continue;
      flat.push_back(a);
      flat.push_back(b);
      for (std::size_t k = 2; k < dim; ++k) flat.push_back(0.0);
    }
  return ParticleSet(dim, std::move(flat));
}

/// Largest Euclidean difference between two posterior-mean maps evaluated
/// on the same queries.
inline double sup_difference(const ParticleSet& a, const ParticleSet& b) {
  if (a.dim() != b.dim() || a.count() != b.count()) throw DimensionMismatch("sup_difference: shapes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.count(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) {
      const double e = a(i, k) - b(i, k);
      sq += e * e;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

/// sup_{|y| <= M} |m_mu(y) - m_P0(y)|: m_mu reads out the evolved truncated
/// cloud with beta_c = 1/tau, m_P0 is the exact Gaussian posterior mean.
inline double posterior_uniform_gap(const GaussianMixture& prior, double tau, double beta, std::size_t n,
                                    const Truncation& radius_policy, double m_grid_bound, std::uint64_t seed,
                                    std::size_t l0 = 200, Parallelism par = {}) {
  const RecoveryCloud cloud = evolve_recovery_cloud(prior, tau, beta, n, radius_policy, seed, l0, par);
  const ParticleSet grid = uniform_query_grid(prior.dim(), m_grid_bound);
  const ParticleSet est = posterior_readout(cloud.evolved, grid, 1.0 / tau, par);
  const GmmPosterior exact(prior, tau);
  std::vector<double> flat;
  flat.reserve(grid.data().size());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const Vec m = exact.mean(grid.point(i));
    flat.insert(flat.end(), m.begin(), m.end());
  }
  return sup_difference(est, ParticleSet(grid.dim(), std::move(flat)));
}

}  // namespace pdenoise
