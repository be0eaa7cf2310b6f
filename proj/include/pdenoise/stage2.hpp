#pragma once

#include <optional>
#include <utility>

#include "pdenoise/core.hpp"
#include "pdenoise/kernel.hpp"
#include "pdenoise/stage1.hpp"

namespace pdenoise {

/// Denoised estimates together with where they were read out.
struct DenoiseResult {
  ParticleSet estimates;
  std::size_t readout_depth = 0;
  double readout_time = 0.0;
  DenoiseConfig config;
  TruncationReport truncation;
};

/// Cross-attention readout x^_i = sum_j b_ij z_j / sum_k b_ik with scale beta_c;
/// with beta_c = 1/sigma2 this is the posterior mean under the empirical
/// measure of `context`.
inline ParticleSet posterior_readout(const ParticleSet& context, const ParticleSet& queries, double beta_c,
                                     Parallelism par = {}) {
  return ParticleSet(context.dim(), barycenters(context, queries, beta_c, par));
}

/// Readout of the noisy cloud against itself (no Stage 1 refinement).
inline ParticleSet one_shot_tweedie(const ParticleSet& noisy, double sigma2, Parallelism par = {}) {
  (void)NoiseModel(sigma2);
  return posterior_readout(noisy, noisy, 1.0 / sigma2, par);
}

/// Stage 1 to the readout depth (on a truncated context if configured), then
/// Stage 2 against the original, untruncated noisy queries.
inline std::pair<DenoiseResult, Trajectory> two_stage_denoise(const ParticleSet& noisy,
                                                              const DenoiseConfig& config,
                                                              std::size_t snapshot_every = 0,
                                                              Parallelism par = {}) {
  require_nonempty(noisy, "two_stage_denoise");
  config.validate();
  const FlowSchedule schedule = config.schedule();
  const std::size_t depth = config.effective_readout_depth();
  if (depth > schedule.total_layers)
    throw ValidationError("readout depth " + std::to_string(depth) + " exceeds total layers " +
                          std::to_string(schedule.total_layers));

  Trajectory traj;
  TruncationReport report;
  if (config.truncation.mode == Truncation::Mode::none) {
    traj = run_stage1(noisy, config, snapshot_every, depth, par);
    report.retained = noisy.count();
    report.retained_indices.resize(noisy.count());
    for (std::size_t i = 0; i < noisy.count(); ++i) report.retained_indices[i] = i;
  } else {
    std::tie(traj, report) = run_truncated(noisy, config, snapshot_every, depth, par);
  }
  const Snapshot& readout = traj.at_depth(depth);
  DenoiseResult result{posterior_readout(readout.particles, noisy, config.effective_beta_c(), par), depth,
                       readout.time, config, std::move(report)};
  return {std::move(result), std::move(traj)};
}

/// Stage 2 readout of new queries against a cached Stage 1 snapshot.
inline ParticleSet amortized_query(const Trajectory& cached, std::size_t depth, const ParticleSet& new_queries,
                                   double beta_c, Parallelism par = {}) {
  return posterior_readout(cached.at_depth(depth).particles, new_queries, beta_c, par);
}

}  // namespace pdenoise
