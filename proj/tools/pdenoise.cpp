// pdenoise: command-line front end for the two-stage attention denoiser.
//
// Exit codes: 0 success, 1 usage, 2 validation/schedule, 3 numeric, 4 I/O.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pdenoise/core.hpp"
#include "pdenoise/dataio.hpp"
#include "pdenoise/harness.hpp"
#include "pdenoise/meanfield.hpp"
#include "pdenoise/metrics.hpp"
#include "pdenoise/stage2.hpp"

namespace pd = pdenoise;

namespace {

int precision = 6;
unsigned workers = 1;

void print_value(double v) { std::cout << pd::format_fixed(v, precision) << "\n"; }

void print_named(const std::string& name, double v) { std::cout << name << " " << pd::format_fixed(v, precision) << "\n"; }

pd::Truncation parse_truncation(const std::string& s) {
  if (s == "none") return pd::Truncation::none();
  if (s == "auto") return pd::Truncation::automatic();
  return pd::Truncation::fixed(pd::parse_double(s, "--truncate"));
}

std::optional<std::size_t> parse_depth(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw pd::ValidationError("--readout-depth must be 'auto' or a nonnegative layer index, got '" + s + "'");
  }
}

/// Inline JSON when the argument starts with '[' or a digit, else a file.
pd::Json json_argument(const std::string& arg, const std::string& flag) {
  const char c = arg.empty() ? '\0' : arg.front();
  if (c == '[' || c == '{' || c == '-' || (c >= '0' && c <= '9')) return pd::parse_json_text(arg, flag);
  return pd::load_json(arg);
}

int exit_code(pd::ErrorCategory c) {
  switch (c) {
    case pd::ErrorCategory::validation: return 2;
    case pd::ErrorCategory::numeric: return 3;
    case pd::ErrorCategory::io: return 4;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage Gaussian-attention denoising: particle refinement plus posterior-mean readout"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--precision", precision, "Decimals for numbers printed to stdout (files always use 17 digits)")
      ->check(CLI::Range(0, 17))
      ->capture_default_str();
  workers = pd::workers_from_env(1);

  // sample
  auto* sample = app.add_subcommand("sample", "Draw clean points from a prior and corrupt them");
  std::string prior_path, out_clean, out_noisy;
  std::size_t n = 0, dim = 0;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  sample->add_option("--prior", prior_path, "Prior mixture JSON file")->required();
  sample->add_option("--n", n, "Number of points")->required();
  sample->add_option("--dim", dim, "Dimension")->required();
  sample->add_option("--sigma2", sigma2, "Noise variance")->required();
  sample->add_option("--seed", seed, "Run seed")->capture_default_str();
  sample->add_option("--out-clean", out_clean, "Output CSV for clean points")->required();
  sample->add_option("--out-noisy", out_noisy, "Output CSV for noisy points")->required();

  // denoise
  auto* denoise = app.add_subcommand("denoise", "Run Stage 1 and read out posterior means for the input points");
  std::string in_path, out_path, snapshots_dir, truncate = "none", readout = "auto";
  double beta = 0.0, horizon = 1.0;
  std::optional<double> beta_c;
  std::size_t l0 = 200, snapshot_every = 0;
  denoise->add_option("--in", in_path, "Noisy points CSV")->required();
  denoise->add_option("--sigma2", sigma2, "Noise variance")->required();
  denoise->add_option("--beta", beta, "Stage 1 kernel bandwidth")->required();
  denoise->add_option("--beta-c", beta_c, "Stage 2 readout scale (default 1/sigma2)");
  denoise->add_option("--l0", l0, "Layers to the denoising time sigma2/2")->required();
  denoise->add_option("--horizon-mult", horizon, "Total layers = round(horizon_mult * l0)")->capture_default_str();
  denoise->add_option("--truncate", truncate, "Context truncation: auto, none or a radius")->capture_default_str();
  denoise->add_option("--readout-depth", readout, "Readout layer: auto (= l0) or an index")->capture_default_str();
  denoise->add_option("--seed", seed, "Run seed (echoed; the pipeline itself is deterministic)")->capture_default_str();
  denoise->add_option("--out", out_path, "Output CSV of estimates")->required();
  denoise->add_option("--snapshots", snapshots_dir, "Directory for Stage 1 snapshot CSVs");
  denoise->add_option("--snapshot-every", snapshot_every, "Extra snapshot interval in layers (0 = L0 and ends only)")
      ->capture_default_str();
  denoise->add_option("--workers", workers, "Worker threads (default PD_WORKERS or 1)");

  // theory
  auto* theory = app.add_subcommand("theory", "Mean-field theory checks");
  theory->require_subcommand(1);
  double v0 = 0.0, vstar = 0.0, t_end = 0.0, tau = 0.0, lambda_max = 0.0, mean_norm = 0.0;
  std::size_t steps = 100, points = 101;
  auto* hit = theory->add_subcommand("hitting-time", "Closed-form time for the variance ODE to reach vstar");
  hit->add_option("--v0", v0, "Initial variance")->required();
  hit->add_option("--vstar", vstar, "Target variance")->required();
  hit->add_option("--beta", beta, "Kernel bandwidth")->required();

  auto* vode = theory->add_subcommand("variance-ode", "Solve v' = -2v/(v + 1/beta) on a uniform grid");
  std::string vode_out;
  vode->add_option("--v0", v0, "Initial variance")->required();
  vode->add_option("--beta", beta, "Kernel bandwidth")->required();
  vode->add_option("--t-end", t_end, "Final time")->required();
  vode->add_option("--steps", steps, "Grid intervals")->required();
  vode->add_option("--out", vode_out, "Output CSV (t,v)")->required();

  auto* cov = theory->add_subcommand("covariance-flow", "Gaussian covariance flow eigenvalues");
  std::string sigma0_arg, mean_arg, cov_out;
  bool at_denoise = false;
  std::optional<double> cov_t_end;
  cov->add_option("--sigma0", sigma0_arg, "Clean covariance: inline JSON matrix or file")->required();
  cov->add_option("--mean", mean_arg, "Mean vector as inline JSON (default zero)");
  cov->add_option("--tau", tau, "Noise variance")->required();
  cov->add_option("--beta", beta, "Kernel bandwidth")->required();
  auto* t_opt = cov->add_option("--t-end", cov_t_end, "Final raw time");
  auto* d_opt = cov->add_flag("--at-denoise-time", at_denoise, "Stop at T_beta = beta*tau/2");
  t_opt->excludes(d_opt);
  cov->add_option("--points", points, "Number of time points written")->capture_default_str();
  cov->add_option("--out", cov_out, "Output CSV (t, lambda_i, conserved_i)")->required();

  auto* trunc = theory->add_subcommand("truncation", "Automatic radius and Gaussian tail bound");
  std::size_t trunc_dim = 1;
  trunc->add_option("--n", n, "Sample size")->required();
  trunc->add_option("--lambda-max", lambda_max, "Largest eigenvalue of the noisy covariance")->required();
  trunc->add_option("--mean-norm", mean_norm, "Norm of the noisy mean")->required();
  trunc->add_option("--dim", trunc_dim, "Dimension used in the tail bound")->capture_default_str();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Distances between point sets");
  metrics->require_subcommand(1);
  auto* w1 = metrics->add_subcommand("w1", "Wasserstein-1 distance");
  std::string a_path, b_path, method = "1d";
  std::size_t projections = pd::kDefaultProjections;
  w1->add_option("--a", a_path, "First CSV")->required();
  w1->add_option("--b", b_path, "Second CSV")->required();
  w1->add_option("--method", method, "1d, sliced or exact")
      ->check(CLI::IsMember({"1d", "sliced", "exact"}))
      ->capture_default_str();
  w1->add_option("--projections", projections, "Sliced directions")->capture_default_str();
  w1->add_option("--seed", seed, "Seed for sliced directions")->capture_default_str();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an experiment spec and write records, plots and manifest");
  std::string spec_path, out_dir;
  exp->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  exp->add_option("--out-dir", out_dir, "Output directory")->required();
  exp->add_option("--workers", workers, "Worker threads (default PD_WORKERS or 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const pd::Parallelism par{std::max(1u, workers)};
  try {
    if (*sample) {
      const pd::GaussianMixture prior = pd::mixture_from_json(pd::load_json(prior_path));
      const pd::ParticleSet clean = pd::sample_prior(prior, n, dim, pd::derive_seed(seed, "cli_clean"), par);
      const pd::ParticleSet noisy = pd::corrupt(clean, sigma2, pd::derive_seed(seed, "cli_noise"), par);
      pd::save_particles(clean, out_clean);
      pd::save_particles(noisy, out_noisy);
    } else if (*denoise) {
      pd::DenoiseConfig cfg;
      cfg.sigma2 = sigma2;
      cfg.beta = beta;
      cfg.beta_c = beta_c;
      cfg.l0 = l0;
      cfg.horizon_mult = horizon;
      cfg.truncation = parse_truncation(truncate);
      cfg.readout_depth = parse_depth(readout);
      cfg.seed = seed;
      const pd::ParticleSet noisy = pd::load_particles(in_path);
      auto [result, traj] = pd::two_stage_denoise(noisy, cfg, snapshot_every, par);
      pd::save_particles(result.estimates, out_path);
      if (!snapshots_dir.empty()) pd::save_trajectory(traj, snapshots_dir);
      std::cout << "readout_depth " << result.readout_depth << "\n";
      print_named("readout_time", result.readout_time);
      std::cout << "retained " << (cfg.truncation.mode == pd::Truncation::Mode::none ? noisy.count()
                                                                                      : result.truncation.retained)
                << "\ndropped " << result.truncation.dropped << "\n";
    } else if (*hit) {
      print_value(pd::hitting_time(v0, vstar, beta));
    } else if (*vode) {
      if (steps < 1) throw pd::ValidationError("--steps must be at least 1");
      if (!(t_end >= 0.0)) throw pd::ValidationError("--t-end must be nonnegative");
      std::vector<double> grid(steps + 1);
      for (std::size_t i = 0; i <= steps; ++i) grid[i] = t_end * static_cast<double>(i) / static_cast<double>(steps);
      const auto v = pd::variance_ode_solve(v0, beta, grid);
      std::string csv = "t,v\n";
      for (std::size_t i = 0; i <= steps; ++i) csv += pd::format_g17(grid[i]) + "," + pd::format_g17(v[i]) + "\n";
      pd::write_text_file(vode_out, csv);
      print_named("v_end", v.back());
    } else if (*cov) {
      const pd::Json sj = json_argument(sigma0_arg, "--sigma0");
      const std::size_t d = sj.is_array() ? sj.size() : 1;
      const pd::Matrix sigma0 = pd::matrix_from_json(sj, d, "--sigma0");
      pd::Vec mean(d, 0.0);
      if (!mean_arg.empty()) {
        mean = pd::parse_json_text(mean_arg, "--mean").get<pd::Vec>();
        if (mean.size() != d) throw pd::DimensionMismatch("--mean has the wrong dimension");
      }
      const pd::CovarianceFlow flow(sigma0, mean, tau, beta);
      if (!at_denoise && !cov_t_end) throw pd::ValidationError("give --t-end or --at-denoise-time");
      const double end = at_denoise ? flow.denoise_time() : *cov_t_end;
      if (!(end >= 0.0)) throw pd::ValidationError("--t-end must be nonnegative");
      if (points < 2) throw pd::ValidationError("--points must be at least 2");
      std::string csv = "t";
      for (std::size_t i = 0; i < d; ++i) csv += ",lambda" + std::to_string(i);
      for (std::size_t i = 0; i < d; ++i) csv += ",conserved" + std::to_string(i);
      csv += "\n";
      pd::CovarianceFlowState last;
      for (std::size_t p = 0; p < points; ++p) {
        const double t = end * static_cast<double>(p) / static_cast<double>(points - 1);
        last = flow.at(t);
        csv += pd::format_g17(t);
        for (std::size_t i = 0; i < d; ++i) csv += "," + pd::format_g17(last.eigenvalues[i]);
        for (std::size_t i = 0; i < d; ++i)
          csv += "," + pd::format_g17(pd::eigen_conserved(last.eigenvalues[i], beta) + 2.0 * t / beta);
        csv += "\n";
      }
      pd::write_text_file(cov_out, csv);
      for (std::size_t i = 0; i < d; ++i) print_named("lambda" + std::to_string(i), last.eigenvalues[i]);
      print_named("recovery_gap", pd::recovery_gap(sigma0, tau, beta));
    } else if (*trunc) {
      const double r = pd::auto_radius(n, lambda_max, mean_norm);
      const auto dd = static_cast<Eigen::Index>(trunc_dim);
      pd::Vec mean(trunc_dim, 0.0);
      if (trunc_dim > 0) mean[0] = mean_norm;
      print_named("radius", r);
      print_named("loss_bound",
                  pd::truncation_loss_probability(n, r, pd::Matrix::Identity(dd, dd) * lambda_max, mean));
    } else if (*w1) {
      const pd::ParticleSet a = pd::load_particles(a_path);
      const pd::ParticleSet b = pd::load_particles(b_path);
      double v = 0.0;
      if (method == "1d") v = pd::w1_1d(a, b);
      else if (method == "sliced") v = pd::w1_sliced(a, b, projections, seed, par);
      else v = pd::w1_exact_matching(a, b);
      print_value(v);
    } else if (*exp) {
      const pd::ExperimentSpec spec = pd::experiment_from_json(pd::load_json(spec_path));
      const auto result = pd::run_and_emit(spec, out_dir, par);
      std::cout << "records " << result.records.size() << "\nfailures " << result.failures.size() << "\n";
      for (const auto& f : result.failures)
        std::cerr << "cell (sweep " << f.sweep_value << ", seed " << f.seed << ") failed: " << f.error << ": "
                  << f.message << "\n";
    }
  } catch (const pd::Error& e) {
    std::cerr << e.name() << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "Error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
