#pragma once

// MSE, per-coordinate variance and Wasserstein-1 distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pdenoise/core.hpp"
#include "pdenoise/parallel.hpp"
#include "pdenoise/random.hpp"

namespace pdenoise {

inline double mse(const ParticleSet& estimates, const ParticleSet& truth) {
  if (estimates.dim() != truth.dim() || estimates.count() != truth.count())
    throw DimensionMismatch("mse: estimates are " + std::to_string(estimates.count()) + "x" +
                            std::to_string(estimates.dim()) + ", truth is " + std::to_string(truth.count()) + "x" +
                            std::to_string(truth.dim()));
  require_nonempty(truth, "mse");
  const auto& a = estimates.data();
  const auto& b = truth.data();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    total += e * e;
  }
  return total / static_cast<double>(truth.count());
}

/// Trace of the unbiased sample covariance divided by d.
inline double empirical_variance(const ParticleSet& points) {
  const std::size_t n = points.count();
  if (n < 2) throw TooFewPoints("empirical_variance needs at least 2 points, got " + std::to_string(n));
  const std::size_t d = points.dim();
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += points(i, k);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = points(i, k) - mean;
      ss += c * c;
    }
    total += ss / static_cast<double>(n - 1);
  }
  return total / static_cast<double>(d);
}

namespace detail {

inline void check_samples(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw EmptyInput(std::string("w1: sample '") + what + "' is empty");
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError(std::string("w1: sample '") + what + "' contains a non-finite value");
}

/// W1 between sorted samples via the quantile coupling: integrates
/// |Fa^{-1}(u) - Fb^{-1}(u)| over the merged breakpoints {i/n} U {j/m}.
inline double w1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(n);
  }
  // Breakpoints are compared exactly in units of 1/(n m).
  std::size_t i = 0, j = 0;
  std::uint64_t cur = 0;
  double total = 0.0;
  while (i < n && j < m) {
    const std::uint64_t na = static_cast<std::uint64_t>(i + 1) * m;
    const std::uint64_t nb = static_cast<std::uint64_t>(j + 1) * n;
    const std::uint64_t next = std::min(na, nb);
    total += static_cast<double>(next - cur) * std::abs(a[i] - b[j]);
    cur = next;
    if (na == next) ++i;
    if (nb == next) ++j;
  }
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace detail

inline double w1_1d(std::vector<double> a, std::vector<double> b) {
  detail::check_samples(a, "a");
  detail::check_samples(b, "b");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return detail::w1_sorted(a, b);
}

/// 1D W1 between two one-dimensional particle sets.
inline double w1_1d(const ParticleSet& a, const ParticleSet& b) {
  if (a.dim() != 1 || b.dim() != 1) throw DimensionMismatch("w1_1d: both sets must be one-dimensional");
  return w1_1d(a.data(), b.data());
}

inline constexpr std::size_t kMaxExactMatching = 512;

/// Minimum-cost perfect assignment (Hungarian method with potentials,
/// O(n^3)). Returns the column assigned to each row.
inline std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(n);
  for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

namespace detail {

inline double euclid(const ParticleSet& a, std::size_t i, const ParticleSet& b, std::size_t j) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    const double e = a(i, k) - b(j, k);
    sq += e * e;
  }
  return std::sqrt(sq);
}

inline void check_pair(const ParticleSet& a, const ParticleSet& b, const char* op) {
  if (a.dim() != b.dim())
    throw DimensionMismatch(std::string(op) + ": dimensions " + std::to_string(a.dim()) + " and " +
                            std::to_string(b.dim()) + " differ");
  if (a.empty() || b.empty()) throw EmptyInput(std::string(op) + ": empty point set");
}

}  // namespace detail

/// Exact W1 between equal-size clouds: the optimal assignment cost / N.
inline double w1_exact_matching(const ParticleSet& a, const ParticleSet& b) {
  detail::check_pair(a, b, "w1_exact_matching");
  const std::size_t n = a.count();
  if (b.count() != n) throw DimensionMismatch("w1_exact_matching: counts differ");
  if (n > kMaxExactMatching)
    throw TooLarge("w1_exact_matching supports N <= " + std::to_string(kMaxExactMatching) + ", got " +
                   std::to_string(n));
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = detail::euclid(a, i, b, j);
  const auto assign = min_cost_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assign[i]];
  return total / static_cast<double>(n);
}

struct SlicedW1 {
  double value = 0.0;
  double stderr_ = 0.0;  // Monte Carlo standard error over directions
};

inline constexpr std::size_t kDefaultProjections = 256;

/// Sliced W1: mean of 1D W1 over random unit directions; direction p is
/// drawn from the stream derive_seed(seed, "w1_sliced", p). For d = 1 this
/// is w1_1d exactly.
inline SlicedW1 w1_sliced_stats(const ParticleSet& a, const ParticleSet& b, std::size_t projections,
                                std::uint64_t seed, Parallelism par = {}) {
  detail::check_pair(a, b, "w1_sliced");
  if (projections < 1) throw ValidationError("w1_sliced: projections must be >= 1");
  const std::size_t d = a.dim();
  if (d == 1) return {w1_1d(a.data(), b.data()), 0.0};
  std::vector<double> vals(projections);
  parallel_for(projections, par.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<double> theta(d), pa(a.count()), pb(b.count());
    for (std::size_t p = begin; p < end; ++p) {
      CounterRng rng(derive_seed(seed, "w1_sliced", p));
      double norm = 0.0;
      while (norm == 0.0) {
        norm = 0.0;
        for (auto& t : theta) {
          t = rng.normal();
          norm += t * t;
        }
      }
      norm = std::sqrt(norm);
      for (auto& t : theta) t /= norm;
      auto project = [&](const ParticleSet& s, std::vector<double>& out) {
        for (std::size_t i = 0; i < s.count(); ++i) {
          double dot = 0.0;
          for (std::size_t k = 0; k < d; ++k) dot += theta[k] * s(i, k);
          out[i] = dot;
        }
        std::sort(out.begin(), out.end());
      };
      project(a, pa);
      project(b, pb);
      vals[p] = detail::w1_sorted(pa, pb);
    }
  });
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(projections);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double se = projections > 1 ? std::sqrt(var / static_cast<double>(projections - 1) /
                                                static_cast<double>(projections))
                                    : 0.0;
  return {mean, se};
}

inline double w1_sliced(const ParticleSet& a, const ParticleSet& b, std::size_t projections = kDefaultProjections,
                        std::uint64_t seed = 0, Parallelism par = {}) {
  return w1_sliced_stats(a, b, projections, seed, par).value;
}

/// W1 with the default method for the dimension: exact 1D for d = 1,
/// sliced otherwise.
inline double w1_auto(const ParticleSet& a, const ParticleSet& b, std::uint64_t seed, Parallelism par = {}) {
  if (a.dim() == 1 && b.dim() == 1) return w1_1d(a, b);
  return w1_sliced(a, b, kDefaultProjections, seed, par);
}

}  // namespace pdenoise
