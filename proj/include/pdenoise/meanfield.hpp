#pragma once

// Deterministic mean-field toolkit: the scalar variance ODE with its exact
// hitting time, the Gaussian covariance flow (solved through its conserved
// quantity), the coupling bound on the recovery gap, and truncation radii.
//
// Two time scales appear. The variance ODE uses effective time t = eta*l/beta,
// where the ideal horizon is sigma2/2. The covariance flow uses raw layer time
// s = eta*l = beta*t, where the horizon is T_beta = beta*tau/2.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "pdenoise/core.hpp"

namespace pdenoise {

namespace detail {

inline double variance_rhs(double v, double beta) { return -2.0 * beta * v / (beta * v + 1.0); }

inline double rk4_variance_step(double v, double h, double beta) {
  const double k1 = variance_rhs(v, beta);
  const double k2 = variance_rhs(v + 0.5 * h * k1, beta);
  const double k3 = variance_rhs(v + 0.5 * h * k2, beta);
  const double k4 = variance_rhs(v + h * k3, beta);
  return v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Advances v from t0 to t1 with step-doubling RK4; each accepted step has an
/// estimated local error <= tol * min(1, v). The relative scale keeps the
/// step inside the stability region once v decays like exp(-2 beta t).
/// `h` carries the step size between calls.
inline double integrate_variance(double v, double t0, double t1, double beta, double& h, double tol) {
  double t = t0;
  while (t < t1) {
    double step = std::min(h, t1 - t);
    for (int attempt = 0;; ++attempt) {
      const double full = rk4_variance_step(v, step, beta);
      const double half = rk4_variance_step(rk4_variance_step(v, 0.5 * step, beta), 0.5 * step, beta);
      const double err = std::abs(half - full) / 15.0;
      const double next = half + (half - full) / 15.0;
      const bool positive = next > 0.0 && std::isfinite(next);
      if (positive && err <= tol * std::min(1.0, v)) {
        v = next;
        t = (step == t1 - t) ? t1 : t + step;
        const double grow = err > 0.0 ? 0.9 * std::pow(tol * std::min(1.0, v) / err, 0.2) : 4.0;
        h = step * std::clamp(grow, 0.2, 4.0);
        break;
      }
      if (attempt > 200 || step < 1e-14)
        throw NumericFailure("variance ODE step size underflow at t = " + std::to_string(t));
      step *= positive ? std::clamp(0.9 * std::pow(tol * std::min(1.0, v) / err, 0.2), 0.1, 0.5) : 0.25;
    }
  }
  return v;
}

}  // namespace detail

/// v(t) of v' = -2v/(v + 1/beta), v(0) = v0, on a nondecreasing grid
/// starting at 0. Local error per step <= 1e-10.
inline std::vector<double> variance_ode_solve(double v0, double beta, const std::vector<double>& t_grid) {
  if (!(v0 > 0.0)) throw ValidationError("variance_ode_solve: v0 must be positive");
  if (!(beta > 0.0)) throw ValidationError("variance_ode_solve: beta must be positive");
  if (t_grid.empty() || t_grid.front() != 0.0)
    throw ValidationError("variance_ode_solve: time grid must start at 0");
  std::vector<double> out;
  out.reserve(t_grid.size());
  double v = v0;
  double h = 1e-3;
  double t = 0.0;
  for (double target : t_grid) {
    if (target < t) throw ValidationError("variance_ode_solve: time grid must be nondecreasing");
    v = detail::integrate_variance(v, t, target, beta, h, 1e-10);
    t = target;
    out.push_back(v);
  }
  return out;
}

/// First time the numerically integrated variance reaches v_star, located by
/// bisection on the end time of variance_ode_solve. Independent of the closed
/// form in hitting_time.
inline double variance_first_passage(double v0, double v_star, double beta) {
  if (!(v_star > 0.0) || v_star > v0)
    throw ValidationError("variance_first_passage: need 0 < v_star <= v0");
  if (v_star == v0) return 0.0;
  auto value_at = [&](double t) { return variance_ode_solve(v0, beta, {0.0, t}).back(); };
  double lo = 0.0;
  double hi = std::max(0.5 * (v0 - v_star), 1e-6);
  while (value_at(hi) > v_star) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (value_at(mid) > v_star ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Exact hitting time (v0 - v*)/2 + log(v0/v*)/(2 beta) of the variance ODE.
inline double hitting_time(double v0, double v_star, double beta) {
  if (!(v0 > 0.0)) throw ValidationError("hitting_time: v0 must be positive");
  if (!(v_star > 0.0)) throw ValidationError("hitting_time: v_star must be positive");
  if (v_star > v0) throw ValidationError("hitting_time: v_star must not exceed v0");
  if (!(beta > 0.0)) throw ValidationError("hitting_time: beta must be positive");
  return 0.5 * (v0 - v_star) + std::log(v0 / v_star) / (2.0 * beta);
}

/// F(lambda) = lambda + log(lambda)/beta, conserved up to -2s/beta along the
/// eigenvalue flow in raw time s.
inline double eigen_conserved(double lambda, double beta) { return lambda + std::log(lambda) / beta; }

/// Unique lambda > 0 with lambda + log(lambda)/beta = target. Safeguarded
/// Newton in u = log(lambda) (g is increasing and convex in u) with a
/// bisection fallback.
inline double solve_eigen_conserved(double target, double beta) {
  if (!std::isfinite(target) || !(beta > 0.0))
    throw ValidationError("solve_eigen_conserved: bad arguments");
  auto g = [&](double u) { return std::exp(u) + u / beta - target; };
  double hi = std::log(std::max(std::abs(target), 1.0)) + 1.0;
  for (double step = 1.0; g(hi) < 0.0; step *= 2.0) hi += step;
  double lo = hi - 1.0;
  for (double step = 1.0; g(lo) > 0.0; step *= 2.0) lo -= step;
  double u = hi;
  for (int it = 0; it < 200; ++it) {
    const double gu = g(u);
    if (gu == 0.0) break;
    (gu > 0.0 ? hi : lo) = u;
    double next = u - gu / (std::exp(u) + 1.0 / beta);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - u) <= 1e-15 * std::max(1.0, std::abs(u));
    u = next;
    if (done || hi - lo <= 1e-15 * std::max(1.0, std::abs(u))) break;
  }
  return std::exp(u);
}

/// Gaussian law N(mean, V diag(eigenvalues) V^T) along the covariance flow.
/// Eigenvalues are ascending; the frame never changes.
struct CovarianceFlowState {
  Vec mean;
  Vec eigenvalues;
  Matrix eigenvectors;
  double time = 0.0;

  Matrix covariance() const {
    const Eigen::Map<const Eigen::VectorXd> lam(eigenvalues.data(), static_cast<Eigen::Index>(eigenvalues.size()));
    return eigenvectors * lam.asDiagonal() * eigenvectors.transpose();
  }
};

/// Covariance flow dG/ds = -2 G (I + beta G)^{-1}, G(0) = sigma0 + tau I,
/// evaluated in closed form per eigenvalue.
class CovarianceFlow {
 public:
  CovarianceFlow(const Matrix& sigma0, Vec mean, double tau, double beta)
      : mean_(std::move(mean)), tau_(tau), beta_(beta) {
    if (sigma0.rows() != sigma0.cols() || sigma0.rows() == 0)
      throw ValidationError("covariance flow: sigma0 must be square");
    if (!sigma0.allFinite()) throw ValidationError("covariance flow: non-finite sigma0");
    if ((sigma0 - sigma0.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ValidationError("covariance flow: sigma0 is not symmetric");
    if (!(tau > 0.0)) throw ValidationError("covariance flow: tau must be positive");
    if (!(beta > 0.0)) throw ValidationError("covariance flow: beta must be positive");
    if (mean_.empty()) mean_.assign(static_cast<std::size_t>(sigma0.rows()), 0.0);
    if (mean_.size() != static_cast<std::size_t>(sigma0.rows()))
      throw DimensionMismatch("covariance flow: mean dimension");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma0);
    if (eig.info() != Eigen::Success) throw NumericFailure("covariance flow: eigendecomposition failed");
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw ValidationError("covariance flow: sigma0 is not positive semidefinite");
    frame_ = eig.eigenvectors();
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
      const double s = std::max(eig.eigenvalues()(i), 0.0);
      clean_.push_back(s);
      initial_.push_back(s + tau_);
    }
  }

  std::size_t dim() const noexcept { return clean_.size(); }
  double beta() const noexcept { return beta_; }
  double tau() const noexcept { return tau_; }
  /// T_beta = beta*tau/2 in raw time.
  double denoise_time() const noexcept { return 0.5 * beta_ * tau_; }
  const Vec& clean_eigenvalues() const noexcept { return clean_; }
  const Vec& initial_eigenvalues() const noexcept { return initial_; }

  CovarianceFlowState at(double t) const {
    if (!(t >= 0.0)) throw ValidationError("covariance flow: time must be nonnegative");
    CovarianceFlowState state{mean_, {}, frame_, t};
    state.eigenvalues.reserve(dim());
    for (double lam0 : initial_) {
      if (t == 0.0) {
        state.eigenvalues.push_back(lam0);
        continue;
      }
      state.eigenvalues.push_back(solve_eigen_conserved(eigen_conserved(lam0, beta_) - 2.0 * t / beta_, beta_));
    }
    return state;
  }

 private:
  Vec mean_;
  double tau_, beta_;
  Matrix frame_;
  Vec clean_, initial_;
};

inline CovarianceFlowState covariance_flow_solve(const Matrix& sigma0, const Vec& mean, double tau,
                                                 double beta, double t_end) {
  return CovarianceFlow(sigma0, mean, tau, beta).at(t_end);
}

/// sqrt(d) * || G_{T_beta}^{1/2} - sigma0^{1/2} ||_HS in the shared eigenframe;
/// an upper bound on W1 between the flowed law and the clean prior.
inline double recovery_gap(const Matrix& sigma0, double tau, double beta) {
  const CovarianceFlow flow(sigma0, {}, tau, beta);
  const auto state = flow.at(flow.denoise_time());
  double hs = 0.0;
  for (std::size_t i = 0; i < flow.dim(); ++i) {
    const double diff = std::sqrt(state.eigenvalues[i]) - std::sqrt(flow.clean_eigenvalues()[i]);
    hs += diff * diff;
  }
  return std::sqrt(static_cast<double>(flow.dim())) * std::sqrt(hs);
}

/// R = |a| + sqrt(8 lambda_max) sqrt(log n + log log(n + e)), floored at
/// 1 + 2|a| where the Gaussian tail bound holds.
inline double auto_radius(std::size_t n, double gamma0_max_eigenvalue, double mean_norm) {
  if (n < 2) throw ValidationError("auto_radius: need n >= 2");
  if (!(gamma0_max_eigenvalue > 0.0)) throw ValidationError("auto_radius: eigenvalue must be positive");
  if (!(mean_norm >= 0.0)) throw ValidationError("auto_radius: mean norm must be nonnegative");
  const double nn = static_cast<double>(n);
  const double r = mean_norm + std::sqrt(8.0 * gamma0_max_eigenvalue) *
                                   std::sqrt(std::log(nn) + std::log(std::log(nn + std::numbers::e)));
  return std::max(r, 1.0 + 2.0 * mean_norm);
}

/// min(1, C n (1+R)^d exp(-R^2 / (8 lambda_max))) with C = 1. The constant is
/// not quantified, so the value is an order-of-magnitude indicator.
inline double truncation_loss_probability(std::size_t n, double radius, const Matrix& gamma0, const Vec& mean) {
  if (gamma0.rows() != gamma0.cols() || gamma0.rows() == 0)
    throw ValidationError("truncation_loss_probability: gamma0 must be square");
  if (mean.size() != static_cast<std::size_t>(gamma0.rows()))
    throw DimensionMismatch("truncation_loss_probability: mean dimension");
  double mean_norm = 0.0;
  for (double v : mean) mean_norm += v * v;
  mean_norm = std::sqrt(mean_norm);
  if (!(radius >= 1.0 + 2.0 * mean_norm))
    throw ValidationError("truncation_loss_probability: radius must be >= 1 + 2|mean|");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gamma0, Eigen::EigenvaluesOnly);
  const double lam = eig.eigenvalues().maxCoeff();
  if (!(lam > 0.0)) throw ValidationError("truncation_loss_probability: gamma0 must be positive definite");
  const double d = static_cast<double>(gamma0.rows());
  const double log_bound =
      std::log(static_cast<double>(n)) + d * std::log1p(radius) - radius * radius / (8.0 * lam);
  return std::min(1.0, std::exp(log_bound));
}

}  // namespace pdenoise
