#pragma once

// Gaussian-attention primitives. All kernel sums use max-subtracted
// exponentials and a fixed reduction order (see detail::lane_sum), so results
// are bit-identical for any worker count.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pdenoise/core.hpp"
#include "pdenoise/parallel.hpp"

namespace pdenoise {

namespace detail {

/// exp(x) for x <= 0, accurate to ~1 ulp; returns 0 below -708. Branch-free so
/// the compiler can vectorize loops over it.
inline double exp_nonpositive(double x) {
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  constexpr double inv_ln2 = 1.44269504088896338700e+00;
  constexpr double shifter = 6755399441055744.0;  // 1.5 * 2^52
  const double xc = x > -708.0 ? x : -708.0;
  const double t = xc * inv_ln2 + shifter;
  const double n = t - shifter;
  const double r = xc - n * ln2_hi - n * ln2_lo;
  // Taylor series to r^13; |r| <= ln(2)/2 so the truncation error is < 1e-17.
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const std::uint64_t bits = (std::bit_cast<std::uint64_t>(t) + 1023u) << 52;
  const double v = p * std::bit_cast<double>(bits);
  return x >= -708.0 ? v : 0.0;
}

/// Number of interleaved accumulators in every kernel reduction. Element j
/// goes to lane j % kLanes (in index order); lanes are combined pairwise.
inline constexpr std::size_t kLanes = 8;

inline double combine_lanes(const double (&acc)[kLanes]) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline double lane_sum(const double* x, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += x[j + l];
  for (std::size_t l = 0; j < n; ++j, ++l) acc[l] += x[j];
  return combine_lanes(acc);
}

inline double lane_dot(const double* a, const double* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[j + l] * b[j + l];
  for (std::size_t l = 0; j < n; ++j, ++l) acc[l] += a[j] * b[j];
  return combine_lanes(acc);
}

/// Axis-major copy of a context set plus its per-axis bounding box.
class ContextSoA {
 public:
  explicit ContextSoA(const ParticleSet& ctx)
      : n_(ctx.count()), d_(ctx.dim()), coords_(n_ * d_), lo_(d_), hi_(d_) {
    if (n_ == 0) throw ValidationError("kernel: empty context");
    const auto& flat = ctx.data();
    for (std::size_t j = 0; j < n_; ++j)
      for (std::size_t k = 0; k < d_; ++k) coords_[k * n_ + j] = flat[j * d_ + k];
    for (std::size_t k = 0; k < d_; ++k) {
      const auto [mn, mx] = std::minmax_element(axis(k), axis(k) + n_);
      lo_[k] = *mn;
      hi_[k] = *mx;
    }
  }

  std::size_t count() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  const double* axis(std::size_t k) const noexcept { return coords_.data() + k * n_; }
  double lo(std::size_t k) const noexcept { return lo_[k]; }
  double hi(std::size_t k) const noexcept { return hi_[k]; }

 private:
  std::size_t n_, d_;
  std::vector<double> coords_;
  std::vector<double> lo_, hi_;
};

struct RowSums {
  double max_logit;  // max_j -(beta/2)|q - z_j|^2
  double sum;        // sum_j exp(logit_j - max_logit)
};

/// Writes w_j = exp(logit_j - max_logit) into `w` (length N). If every term
/// vanishes the row falls back to a one-hot weight on the nearest point.
inline RowSums kernel_row(const ContextSoA& ctx, std::span<const double> q, double beta, double* w) {
  const std::size_t n = ctx.count();
  std::fill(w, w + n, 0.0);
  for (std::size_t k = 0; k < ctx.dim(); ++k) {
    const double* z = ctx.axis(k);
    const double qk = q[k];
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = qk - z[j];
      w[j] += diff * diff;
    }
  }
  std::size_t nearest = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (w[j] < w[nearest]) nearest = j;
  const double half_beta = 0.5 * beta;
  const double max_logit = -(half_beta * w[nearest]);
  for (std::size_t j = 0; j < n; ++j) w[j] = exp_nonpositive(-(half_beta * w[j]) - max_logit);
  double sum = lane_sum(w, n);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::fill(w, w + n, 0.0);
    w[nearest] = 1.0;
    sum = 1.0;
  }
  return {max_logit, sum};
}

/// Barycenter of the context under the weights of one kernel row, clamped to
/// the context's bounding box (rounding can leave it one ulp outside).
inline void weighted_mean(const ContextSoA& ctx, const double* w, double sum, double* out) {
  for (std::size_t k = 0; k < ctx.dim(); ++k) {
    const double m = lane_dot(w, ctx.axis(k), ctx.count()) / sum;
    out[k] = std::clamp(m, ctx.lo(k), ctx.hi(k));
  }
}

inline void check_beta(double beta, const char* where) {
  if (!(beta > 0.0) || std::isnan(beta))
    throw ValidationError(std::string(where) + ": bandwidth must be positive");
}

inline void check_query(const ParticleSet& ctx, std::span<const double> q, const char* where) {
  require_nonempty(ctx, where);
  if (q.size() != ctx.dim())
    throw DimensionMismatch(std::string(where) + ": query dimension " + std::to_string(q.size()) +
                            " does not match context dimension " + std::to_string(ctx.dim()));
}

}  // namespace detail

/// Normalized attention weights of one query over a context; nonnegative and
/// summing to 1.
struct WeightVector {
  std::vector<double> weights;

  double sum() const { return detail::lane_sum(weights.data(), weights.size()); }
};

/// w_j proportional to exp(-(beta/2) |query - z_j|^2).
inline WeightVector attention_weights(const ParticleSet& context, std::span<const double> query,
                                      double beta) {
  detail::check_query(context, query, "attention_weights");
  detail::check_beta(beta, "attention_weights");
  const detail::ContextSoA soa(context);
  WeightVector out{std::vector<double>(soa.count())};
  const auto row = detail::kernel_row(soa, query, beta, out.weights.data());
  for (double& w : out.weights) w /= row.sum;
  return out;
}

/// Attention barycenter F(x) = sum_j w_j z_j.
inline Vec barycenter(const ParticleSet& context, std::span<const double> query, double beta) {
  detail::check_query(context, query, "barycenter");
  detail::check_beta(beta, "barycenter");
  const detail::ContextSoA soa(context);
  std::vector<double> w(soa.count());
  const auto row = detail::kernel_row(soa, query, beta, w.data());
  Vec out(soa.dim());
  detail::weighted_mean(soa, w.data(), row.sum, out.data());
  return out;
}

/// Exact Gaussian attention drift F(x) - x.
inline Vec drift(const ParticleSet& context, std::span<const double> query, double beta) {
  Vec f = barycenter(context, query, beta);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] -= query[k];
  return f;
}

/// Dense-associative-memory energy -(1/beta_c) log sum_j exp(-(beta_c/2)|q - z_j|^2).
inline double energy(const ParticleSet& context, std::span<const double> query, double beta_c) {
  detail::check_query(context, query, "energy");
  detail::check_beta(beta_c, "energy");
  const detail::ContextSoA soa(context);
  std::vector<double> w(soa.count());
  const auto row = detail::kernel_row(soa, query, beta_c, w.data());
  return -(row.max_logit + std::log(row.sum)) / beta_c;
}

/// Gradient of `energy` in the query: the weighted mean of (q - z_j).
inline Vec energy_gradient(const ParticleSet& context, std::span<const double> query, double beta_c) {
  detail::check_query(context, query, "energy_gradient");
  detail::check_beta(beta_c, "energy_gradient");
  const detail::ContextSoA soa(context);
  const std::size_t n = soa.count();
  std::vector<double> w(n), disp(n);
  const auto row = detail::kernel_row(soa, query, beta_c, w.data());
  Vec grad(soa.dim());
  for (std::size_t k = 0; k < soa.dim(); ++k) {
    const double* z = soa.axis(k);
    for (std::size_t j = 0; j < n; ++j) disp[j] = query[k] - z[j];
    grad[k] = detail::lane_dot(w.data(), disp.data(), n) / row.sum;
  }
  return grad;
}

/// Barycenter of every query against one context, rows computed on up to
/// `par.workers` threads. Returns a point-major buffer.
inline std::vector<double> barycenters(const ParticleSet& context, const ParticleSet& queries,
                                       double beta, Parallelism par = {}) {
  require_nonempty(context, "barycenters");
  require_nonempty(queries, "barycenters");
  require_dim(queries, context.dim(), "barycenters");
  detail::check_beta(beta, "barycenters");
  const detail::ContextSoA soa(context);
  const std::size_t d = soa.dim();
  std::vector<double> out(queries.count() * d);
  parallel_for(queries.count(), par.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<double> w(soa.count());
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = detail::kernel_row(soa, queries.point(i), beta, w.data());
      detail::weighted_mean(soa, w.data(), row.sum, out.data() + i * d);
    }
  });
  return out;
}

}  // namespace pdenoise
