#pragma once

// Config-driven experiment runner. An experiment is a grid of independent
// cells (sweep value x seed); every cell samples clean data, corrupts it,
// runs the pipeline and emits MetricsRecords. Records are returned in a
// canonical order, so output never depends on the worker count.
//
// Spec JSON:
//   {"name": s, "kind": "variance-decay"|"mse-vs-n"|"mse-vs-sigma2"|
//                       "mse-vs-depth"|"mse-vs-beta"|"theory-verify",
//    "prior": <mixture>, "config": <denoise config>, "n": int,
//    "sweep": [f, ..], "seeds": [int, ..], "snapshot_every": int,
//    "mmse_samples": int, "mmse_seed": int, "ns": [int, ..], "m_bound": f,
//    "output_dir": s}
//
// The sweep is over beta (variance-decay, mse-vs-beta, theory-verify),
// N (mse-vs-n, mse-vs-depth) or sigma2 (mse-vs-sigma2).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "pdenoise/core.hpp"
#include "pdenoise/dataio.hpp"
#include "pdenoise/meanfield.hpp"
#include "pdenoise/metrics.hpp"
#include "pdenoise/oracle.hpp"
#include "pdenoise/parallel.hpp"
#include "pdenoise/stage1.hpp"
#include "pdenoise/stage2.hpp"
#include "pdenoise/validation.hpp"

namespace pdenoise {

enum class ExperimentKind { variance_decay, mse_vs_n, mse_vs_sigma2, mse_vs_depth, mse_vs_beta, theory_verify };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::variance_decay: return "variance-decay";
    case ExperimentKind::mse_vs_n: return "mse-vs-n";
    case ExperimentKind::mse_vs_sigma2: return "mse-vs-sigma2";
    case ExperimentKind::mse_vs_depth: return "mse-vs-depth";
    case ExperimentKind::mse_vs_beta: return "mse-vs-beta";
    case ExperimentKind::theory_verify: return "theory-verify";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::variance_decay, ExperimentKind::mse_vs_n, ExperimentKind::mse_vs_sigma2,
                 ExperimentKind::mse_vs_depth, ExperimentKind::mse_vs_beta, ExperimentKind::theory_verify})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown experiment kind '" + s + "'");
}

/// Name of the swept parameter for a kind.
inline const char* sweep_parameter(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::mse_vs_n:
    case ExperimentKind::mse_vs_depth: return "n";
    case ExperimentKind::mse_vs_sigma2: return "sigma2";
    default: return "beta";
  }
}

struct ExperimentSpec {
  std::string name;
  ExperimentKind kind = ExperimentKind::variance_decay;
  GaussianMixture prior;
  DenoiseConfig config;
  std::size_t n = 2000;
  std::vector<double> sweep;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> snapshot_every;
  std::size_t mmse_samples = 1000000;
  std::uint64_t mmse_seed = 20240601;
  std::vector<std::size_t> ns;  // theory-verify only
  double m_bound = 2.0;         // theory-verify only
  std::string output_dir;

  std::size_t effective_snapshot_every() const {
    if (snapshot_every) return *snapshot_every;
    switch (kind) {
      case ExperimentKind::variance_decay: return 1;
      case ExperimentKind::mse_vs_depth: return 10;
      default: return 0;
    }
  }

  void validate() const {
    if (sweep.empty()) throw ValidationError("experiment: sweep must be nonempty");
    if (seeds.empty()) throw ValidationError("experiment: seeds must be nonempty");
    (void)validate_mixture(prior);
    for (double v : sweep)
      if (!std::isfinite(v) || !(v > 0.0)) throw ValidationError("experiment: sweep values must be positive");
    if (kind == ExperimentKind::mse_vs_n || kind == ExperimentKind::mse_vs_depth)
      for (double v : sweep)
        if (v != std::floor(v)) throw ValidationError("experiment: N sweep values must be integers");
    if (kind == ExperimentKind::theory_verify) {
      if (ns.empty()) throw ValidationError("experiment: theory-verify needs a nonempty 'ns'");
      detail::require_single_gaussian(prior, "theory-verify");
    }
    if (n < 1) throw ValidationError("experiment: n must be at least 1");
    if (mmse_samples < 1000) throw ValidationError("experiment: mmse_samples must be >= 1000");
  }
};

inline ExperimentSpec experiment_from_json(const Json& j) {
  try {
    ExperimentSpec s;
    s.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    s.name = j.value("name", std::string(to_string(s.kind)));
    s.prior = mixture_from_json(j.at("prior"));
    s.config = config_from_json(j.at("config"));
    s.n = j.value("n", std::size_t{2000});
    s.sweep = j.at("sweep").get<std::vector<double>>();
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("snapshot_every")) s.snapshot_every = j.at("snapshot_every").get<std::size_t>();
    s.mmse_samples = j.value("mmse_samples", s.mmse_samples);
    s.mmse_seed = j.value("mmse_seed", s.mmse_seed);
    if (j.contains("ns")) s.ns = j.at("ns").get<std::vector<std::size_t>>();
    s.m_bound = j.value("m_bound", s.m_bound);
    s.output_dir = j.value("output_dir", std::string());
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("experiment spec: ") + e.what());
  }
}

inline Json experiment_to_json(const ExperimentSpec& s) {
  Json j{{"name", s.name},
         {"kind", to_string(s.kind)},
         {"prior", mixture_to_json(s.prior)},
         {"config", config_to_json(s.config)},
         {"n", s.n},
         {"sweep", s.sweep},
         {"seeds", s.seeds},
         {"snapshot_every", s.effective_snapshot_every()},
         {"mmse_samples", s.mmse_samples},
         {"mmse_seed", s.mmse_seed},
         {"m_bound", s.m_bound}};
  if (!s.ns.empty()) j["ns"] = s.ns;
  if (!s.output_dir.empty()) j["output_dir"] = s.output_dir;
  return j;
}

struct CellFailure {
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  std::string error;
  std::string message;
};

struct MmseBaseline {
  double sigma2 = 0.0;
  double mmse = 0.0;
  double stderr_ = 0.0;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<CellFailure> failures;
  std::vector<MmseBaseline> baselines;
};

/// Canonical record order: (label, sweep_value, seed, depth_index, value_kind).
inline void sort_records(std::vector<MetricsRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    return std::tie(a.label, a.sweep_value, a.seed, a.depth_index, a.value_kind) <
           std::tie(b.label, b.sweep_value, b.seed, b.depth_index, b.value_kind);
  });
}

namespace detail {

struct CellContext {
  const ExperimentSpec& spec;
  double sweep_value;
  std::uint64_t seed;
  const std::map<double, MmseBaseline>& mmse;
};

inline DenoiseConfig cell_config(const ExperimentSpec& spec, double sweep_value, std::uint64_t seed) {
  DenoiseConfig cfg = spec.config;
  cfg.seed = seed;
  switch (spec.kind) {
    case ExperimentKind::variance_decay:
    case ExperimentKind::mse_vs_beta:
    case ExperimentKind::theory_verify: cfg.beta = sweep_value; break;
    case ExperimentKind::mse_vs_sigma2: cfg.sigma2 = sweep_value; break;
    default: break;
  }
  cfg.validate();
  return cfg;
}

inline std::size_t cell_n(const ExperimentSpec& spec, double sweep_value) {
  if (spec.kind == ExperimentKind::mse_vs_n || spec.kind == ExperimentKind::mse_vs_depth)
    return static_cast<std::size_t>(sweep_value);
  return spec.n;
}

/// Clean and noisy clouds of a cell. Streams depend only on the seed, so a
/// smaller N is a prefix of a larger one and sigma2 sweeps share the same
/// standard-normal noise.
inline std::pair<ParticleSet, ParticleSet> cell_data(const ExperimentSpec& spec, std::size_t n, double sigma2,
                                                     std::uint64_t seed) {
  ParticleSet clean = sample_prior(spec.prior, n, spec.prior.dim(), derive_seed(seed, "harness_clean"));
  ParticleSet noisy = corrupt(clean, sigma2, derive_seed(seed, "harness_noise"));
  return {std::move(clean), std::move(noisy)};
}

inline double stage1_only_mse(const Snapshot& snap, const ParticleSet& clean, const TruncationReport& report) {
  if (snap.particles.count() == clean.count()) return mse(snap.particles, clean);
  return mse(snap.particles, clean.subset(report.retained_indices));
}

inline std::vector<MetricsRecord> run_cell(const CellContext& c) {
  const ExperimentSpec& spec = c.spec;
  const DenoiseConfig cfg = cell_config(spec, c.sweep_value, c.seed);
  const std::size_t n = cell_n(spec, c.sweep_value);
  std::vector<MetricsRecord> out;
  auto rec = [&](std::string label, std::size_t depth, double time, ValueKind kind, double value) {
    out.push_back({std::move(label), c.sweep_value, c.seed, depth, time, kind, value});
  };

  if (spec.kind == ExperimentKind::theory_verify) {
    for (std::size_t m : spec.ns) {
      const auto rows =
          recovery_trend_check(spec.prior, cfg.sigma2, {cfg.beta}, {m}, cfg.truncation, {c.seed}, cfg.l0);
      const std::string suffix = "/n=" + std::to_string(m);
      rec("recovery-w1" + suffix, cfg.l0, cfg.sigma2 / 2.0, ValueKind::w1, rows.front().w1);
      rec("retained" + suffix, cfg.l0, cfg.sigma2 / 2.0, ValueKind::count, static_cast<double>(rows.front().retained));
      rec("posterior-gap" + suffix, cfg.l0, cfg.sigma2 / 2.0, ValueKind::gap,
          posterior_uniform_gap(spec.prior, cfg.sigma2, cfg.beta, m, cfg.truncation, spec.m_bound, c.seed, cfg.l0));
    }
    return out;
  }

  const auto [clean, noisy] = cell_data(spec, n, cfg.sigma2, c.seed);
  const std::size_t every = spec.effective_snapshot_every();

  if (spec.kind == ExperimentKind::variance_decay) {
    const Trajectory traj = run_stage1(noisy, cfg, every);
    for (const auto& s : traj.snapshots)
      rec("stage1", s.depth, s.time, ValueKind::variance, empirical_variance(s.particles));
    return out;
  }

  const double beta_c = cfg.effective_beta_c();
  if (spec.kind == ExperimentKind::mse_vs_depth) {
    DenoiseConfig full = cfg;
    Trajectory traj;
    TruncationReport report;
    if (cfg.truncation.mode == Truncation::Mode::none) {
      traj = run_stage1(noisy, full, every);
      report.retained = n;
    } else {
      std::tie(traj, report) = run_truncated(noisy, full, every);
    }
    for (const auto& s : traj.snapshots) {
      rec("two-stage", s.depth, s.time, ValueKind::mse, mse(posterior_readout(s.particles, noisy, beta_c), clean));
      rec("stage1-only", s.depth, s.time, ValueKind::mse, stage1_only_mse(s, clean, report));
    }
    rec("one-shot", 0, 0.0, ValueKind::mse, mse(one_shot_tweedie(noisy, cfg.sigma2), clean));
    return out;
  }

  auto [result, traj] = two_stage_denoise(noisy, cfg);
  const Snapshot& readout = traj.at_depth(result.readout_depth);
  rec("two-stage", result.readout_depth, result.readout_time, ValueKind::mse, mse(result.estimates, clean));
  rec("one-shot", 0, 0.0, ValueKind::mse, mse(one_shot_tweedie(noisy, cfg.sigma2), clean));
  rec("stage1-only", result.readout_depth, result.readout_time, ValueKind::mse,
      stage1_only_mse(readout, clean, result.truncation));
  return out;
}

/// Seed-independent reference curves of a sweep value; seed field is 0.
inline std::vector<MetricsRecord> reference_records(const ExperimentSpec& spec, double sweep_value,
                                                    const std::map<double, MmseBaseline>& mmse) {
  std::vector<MetricsRecord> out;
  const DenoiseConfig cfg = cell_config(spec, sweep_value, 0);
  switch (spec.kind) {
    case ExperimentKind::variance_decay: {
      const FlowSchedule sch = cfg.schedule();
      const std::size_t every = std::max<std::size_t>(1, spec.effective_snapshot_every());
      std::vector<std::size_t> depths;
      for (std::size_t l = 0; l <= sch.total_layers; l += every) depths.push_back(l);
      if (depths.back() != sch.total_layers) depths.push_back(sch.total_layers);
      std::vector<double> grid;
      for (auto l : depths) grid.push_back(sch.time_at(l));
      const double v0 = spec.prior.per_coordinate_variance() + cfg.sigma2;
      const auto v = variance_ode_solve(v0, cfg.beta, grid);
      for (std::size_t i = 0; i < depths.size(); ++i)
        out.push_back({"ode-reference", sweep_value, 0, depths[i], grid[i], ValueKind::variance, v[i]});
      break;
    }
    case ExperimentKind::theory_verify: {
      const GaussianMixture mix = validate_mixture(spec.prior);
      out.push_back({"coupling-bound", sweep_value, 0, cfg.l0, cfg.sigma2 / 2.0, ValueKind::w1,
                     recovery_gap(mix.covariances[0], cfg.sigma2, cfg.beta)});
      break;
    }
    default: {
      const auto& b = mmse.at(cfg.sigma2);
      out.push_back({"bayes-mmse", sweep_value, 0, 0, 0.0, ValueKind::mse, b.mmse});
      break;
    }
  }
  return out;
}

inline bool needs_mmse(ExperimentKind k) {
  return k != ExperimentKind::variance_decay && k != ExperimentKind::theory_verify;
}

}  // namespace detail

/// Runs every (sweep value, seed) cell. A failing cell contributes one
/// record labelled "failed" with value NaN plus a CellFailure entry.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, Parallelism par = {}) {
  spec.validate();
  ExperimentResult result;
  std::map<double, MmseBaseline> mmse;
  if (detail::needs_mmse(spec.kind)) {
    std::vector<double> sig;
    for (double v : spec.sweep) {
      try {
        sig.push_back(detail::cell_config(spec, v, 0).sigma2);
      } catch (const Error&) {
        // The cells of this sweep value fail and are reported individually.
      }
    }
    std::sort(sig.begin(), sig.end());
    sig.erase(std::unique(sig.begin(), sig.end()), sig.end());
    for (double s2 : sig) {
      const auto est = bayes_mmse(spec.prior, s2, spec.prior.dim(), spec.mmse_samples, spec.mmse_seed, par);
      mmse[s2] = {s2, est.mmse, est.stderr_};
      result.baselines.push_back(mmse[s2]);
    }
  }

  const std::size_t cells = spec.sweep.size() * spec.seeds.size();
  std::vector<std::vector<MetricsRecord>> per_cell(cells);
  std::vector<std::optional<CellFailure>> failed(cells);
  parallel_for(cells, par.workers, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t i = begin; i < end; ++i) {
      const double v = spec.sweep[i / spec.seeds.size()];
      const std::uint64_t seed = spec.seeds[i % spec.seeds.size()];
      try {
        per_cell[i] = detail::run_cell({spec, v, seed, mmse});
      } catch (const Error& e) {
        failed[i] = CellFailure{v, seed, e.name(), e.what()};
      } catch (const std::exception& e) {
        failed[i] = CellFailure{v, seed, "Error", e.what()};
      }
    }
  });
  for (std::size_t i = 0; i < cells; ++i) {
    if (failed[i]) {
      result.records.push_back({"failed", failed[i]->sweep_value, failed[i]->seed, 0, 0.0, ValueKind::count,
                                std::numeric_limits<double>::quiet_NaN()});
      result.failures.push_back(*failed[i]);
    } else {
      result.records.insert(result.records.end(), per_cell[i].begin(), per_cell[i].end());
    }
  }
  std::vector<double> sweep_sorted = spec.sweep;
  std::sort(sweep_sorted.begin(), sweep_sorted.end());
  sweep_sorted.erase(std::unique(sweep_sorted.begin(), sweep_sorted.end()), sweep_sorted.end());
  for (double v : sweep_sorted) {
    try {
      auto refs = detail::reference_records(spec, v, mmse);
      result.records.insert(result.records.end(), refs.begin(), refs.end());
    } catch (const Error& e) {
      result.failures.push_back({v, 0, e.name(), std::string("reference: ") + e.what()});
    }
  }
  sort_records(result.records);
  return result;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kRecordsHeader = "label,sweep_value,seed,depth_index,time,value_kind,value";

inline std::string records_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kRecordsHeader) + "\n";
  for (const auto& r : records) {
    out += r.label + "," + format_g17(r.sweep_value) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.depth_index) + "," + format_g17(r.time) + "," + to_string(r.value_kind) + "," +
           (std::isnan(r.value) ? std::string("nan") : format_g17(r.value)) + "\n";
  }
  return out;
}

inline std::vector<MetricsRecord> records_from_csv(const std::string& text, const std::string& source = "<records>") {
  std::vector<MetricsRecord> out;
  std::size_t pos = 0, line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (header) {
      if (line != kRecordsHeader) throw ParseError(where + ": expected header '" + kRecordsHeader + "'");
      header = false;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError(where + ": expected 7 fields, got " + std::to_string(f.size()));
    MetricsRecord r;
    r.label = std::string(f[0]);
    r.sweep_value = parse_double(f[1], where);
    try {
      r.seed = std::stoull(std::string(f[2]));
      r.depth_index = std::stoull(std::string(f[3]));
    } catch (const std::exception&) {
      throw ParseError(where + ": bad integer field");
    }
    r.time = parse_double(f[4], where);
    r.value_kind = value_kind_from_string(std::string(f[5]));
    r.value = f[6] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(f[6], where);
    out.push_back(std::move(r));
  }
  if (header) throw ParseError(source + ": no header");
  return out;
}

/// MSE records with MSE/sigma2 and MSE/MMSE columns.
inline std::string normalized_csv(const std::vector<MetricsRecord>& records, const ExperimentSpec& spec,
                                  const std::vector<MmseBaseline>& baselines) {
  std::string out = "label,sweep_value,seed,depth_index,time,mse,mse_over_sigma2,mse_over_mmse\n";
  for (const auto& r : records) {
    if (r.value_kind != ValueKind::mse) continue;
    const double s2 = detail::cell_config(spec, r.sweep_value, 0).sigma2;
    double mm = std::numeric_limits<double>::quiet_NaN();
    for (const auto& b : baselines)
      if (b.sigma2 == s2) mm = b.mmse;
    const double ratio = mm > 0.0 ? r.value / mm : std::numeric_limits<double>::quiet_NaN();
    auto g = [](double v) { return std::isnan(v) ? std::string("nan") : format_g17(v); };
    out += r.label + "," + format_g17(r.sweep_value) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.depth_index) + "," + format_g17(r.time) + "," + g(r.value) + "," + g(r.value / s2) + "," +
           g(ratio) + "\n";
  }
  return out;
}

struct PlotPoint {
  double x = 0.0, mean = 0.0, sd = 0.0;
};

struct PlotSeries {
  std::string name;
  bool dashed = false;
  std::vector<PlotPoint> points;
};

struct Plot {
  std::string file;
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<PlotSeries> series;
};

namespace detail {

inline bool is_reference(const std::string& label) {
  return label == "ode-reference" || label == "bayes-mmse" || label == "coupling-bound";
}

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Mean and sample standard deviation over seeds per (series, x).
inline std::vector<PlotSeries> aggregate(const std::vector<MetricsRecord>& records,
                                         const std::function<bool(const MetricsRecord&)>& keep,
                                         const std::function<std::string(const MetricsRecord&)>& series_name,
                                         const std::function<double(const MetricsRecord&)>& x_of,
                                         const std::function<double(const MetricsRecord&)>& y_of) {
  std::map<std::string, std::map<double, std::vector<double>>> acc;
  for (const auto& r : records) {
    if (!keep(r) || std::isnan(r.value)) continue;
    acc[series_name(r)][x_of(r)].push_back(y_of(r));
  }
  std::vector<PlotSeries> out;
  for (auto& [name, by_x] : acc) {
    PlotSeries s;
    s.name = name;
    s.dashed = is_reference(name.substr(0, name.find(' ')));
    for (auto& [x, ys] : by_x) {
      double m = 0.0;
      for (double y : ys) m += y;
      m /= static_cast<double>(ys.size());
      double var = 0.0;
      for (double y : ys) var += (y - m) * (y - m);
      const double sd = ys.size() > 1 ? std::sqrt(var / static_cast<double>(ys.size() - 1)) : 0.0;
      s.points.push_back({x, m, sd});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Plots derived from a record set: one per experiment kind.
inline std::vector<Plot> build_plots(const std::vector<MetricsRecord>& records, const ExperimentSpec& spec) {
  using detail::fmt3;
  const std::string param = sweep_parameter(spec.kind);
  std::vector<Plot> plots;
  auto sigma2_of = [&](const MetricsRecord& r) { return detail::cell_config(spec, r.sweep_value, 0).sigma2; };
  switch (spec.kind) {
    case ExperimentKind::variance_decay:
    case ExperimentKind::mse_vs_depth: {
      const bool var = spec.kind == ExperimentKind::variance_decay;
      Plot p;
      p.file = var ? "variance_decay.svg" : "mse_vs_depth.svg";
      p.title = spec.name;
      p.x_label = var ? "time t = l h" : "depth l";
      p.y_label = var ? "per-coordinate variance" : "MSE / sigma^2";
      p.series = detail::aggregate(
          records,
          [&](const MetricsRecord& r) { return r.value_kind == (var ? ValueKind::variance : ValueKind::mse); },
          [&](const MetricsRecord& r) { return r.label + " " + param + "=" + fmt3(r.sweep_value); },
          [&](const MetricsRecord& r) { return var ? r.time : static_cast<double>(r.depth_index); },
          [&](const MetricsRecord& r) { return var ? r.value : r.value / sigma2_of(r); });
      plots.push_back(std::move(p));
      break;
    }
    case ExperimentKind::theory_verify: {
      Plot p;
      p.file = "recovery.svg";
      p.title = spec.name;
      p.x_label = "beta";
      p.y_label = "W1 / posterior gap";
      p.log_x = true;
      p.series = detail::aggregate(
          records,
          [](const MetricsRecord& r) { return r.value_kind == ValueKind::w1 || r.value_kind == ValueKind::gap; },
          [](const MetricsRecord& r) { return r.label; }, [](const MetricsRecord& r) { return r.sweep_value; },
          [](const MetricsRecord& r) { return r.value; });
      plots.push_back(std::move(p));
      break;
    }
    default: {
      Plot p;
      p.file = std::string("mse_vs_") + param + ".svg";
      p.title = spec.name;
      p.x_label = param;
      p.y_label = "MSE / sigma^2";
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (double v : spec.sweep) lo = std::min(lo, v), hi = std::max(hi, v);
      p.log_x = hi / lo >= 20.0;
      p.series = detail::aggregate(
          records, [](const MetricsRecord& r) { return r.value_kind == ValueKind::mse; },
          [](const MetricsRecord& r) { return r.label; }, [](const MetricsRecord& r) { return r.sweep_value; },
          [&](const MetricsRecord& r) { return r.value / sigma2_of(r); });
      plots.push_back(std::move(p));
      break;
    }
  }
  return plots;
}

/// Static SVG line plot: mean line with a +-1 sd band per series; reference
/// series dashed. A series with a single point is drawn as a horizontal line
/// when dashed, as a marker otherwise.
inline std::string render_svg(const Plot& plot) {
  using detail::fmt2;
  using detail::fmt3;
  constexpr double W = 760, H = 480, ml = 70, mr = 210, mt = 40, mb = 55;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto tx = [&](double x) { return plot.log_x && x > 0.0 ? std::log10(x) : x; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series)
    for (const auto& p : s.points) {
      x0 = std::min(x0, tx(p.x));
      x1 = std::max(x1, tx(p.x));
      y0 = std::min(y0, p.mean - p.sd);
      y1 = std::max(y1, p.mean + p.sd);
    }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 - x0 <= 0.0) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 <= 0.0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return ml + (tx(x) - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(W) + "\" height=\"" + fmt2(H) +
         "\" viewBox=\"0 0 " + fmt2(W) + " " + fmt2(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt2(ml + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + plot.title +
         "</text>\n";
  svg += "<rect x=\"" + fmt2(ml) + "\" y=\"" + fmt2(mt) + "\" width=\"" + fmt2(pw) + "\" height=\"" + fmt2(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double sx = ml + pw * i / 4.0, sy = mt + ph - ph * i / 4.0;
    const double label_x = plot.log_x ? std::pow(10.0, fx) : fx;
    svg += "<line x1=\"" + fmt2(sx) + "\" y1=\"" + fmt2(mt + ph) + "\" x2=\"" + fmt2(sx) + "\" y2=\"" +
           fmt2(mt + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt2(sx) + "\" y=\"" + fmt2(mt + ph + 18) + "\" text-anchor=\"middle\">" + fmt3(label_x) +
           "</text>\n";
    svg += "<line x1=\"" + fmt2(ml - 5) + "\" y1=\"" + fmt2(sy) + "\" x2=\"" + fmt2(ml) + "\" y2=\"" + fmt2(sy) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt2(ml - 8) + "\" y=\"" + fmt2(sy + 4) + "\" text-anchor=\"end\">" + fmt3(fy) +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt2(ml + pw / 2) + "\" y=\"" + fmt2(H - 12) + "\" text-anchor=\"middle\">" + plot.x_label +
         (plot.log_x ? " (log scale)" : "") + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt2(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt2(mt + ph / 2) + ")\">" + plot.y_label + "</text>\n";
  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const std::string color = colors[si % 10];
    std::vector<PlotPoint> pts = s.points;
    if (s.dashed && pts.size() == 1) {
      // Horizontal reference across the full x range.
      const double y = pts[0].mean;
      const double xa = plot.log_x ? std::pow(10.0, x0) : x0, xb = plot.log_x ? std::pow(10.0, x1) : x1;
      pts = {{xa, y, 0.0}, {xb, y, 0.0}};
    }
    if (pts.size() > 1) {
      std::string band;
      for (const auto& p : pts) band += fmt2(px(p.x)) + "," + fmt2(py(p.mean + p.sd)) + " ";
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) band += fmt2(px(it->x)) + "," + fmt2(py(it->mean - it->sd)) + " ";
      svg += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      std::string line;
      for (const auto& p : pts) line += fmt2(px(p.x)) + "," + fmt2(py(p.mean)) + " ";
      svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.8\"" +
             (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    } else if (!pts.empty()) {
      svg += "<circle cx=\"" + fmt2(px(pts[0].x)) + "\" cy=\"" + fmt2(py(pts[0].mean)) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    }
    const double ly = mt + 14 + 18.0 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt2(ml + pw + 12) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" + fmt2(ml + pw + 36) +
           "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"1.8\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + fmt2(ml + pw + 42) + "\" y=\"" + fmt2(ly) + "\">" + s.name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes records.csv, normalized.csv (MSE kinds) and one SVG per plot.
/// Returns the paths written.
inline std::vector<std::filesystem::path> emit_plots(const std::vector<MetricsRecord>& records,
                                                     const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                                                     const std::vector<MmseBaseline>& baselines = {}) {
  if (records.empty()) throw ValidationError("emit_plots: no records");
  std::vector<std::filesystem::path> written;
  write_text_file(out_dir / "records.csv", records_to_csv(records));
  written.push_back(out_dir / "records.csv");
  if (detail::needs_mmse(spec.kind)) {
    write_text_file(out_dir / "normalized.csv", normalized_csv(records, spec, baselines));
    written.push_back(out_dir / "normalized.csv");
  }
  for (const auto& plot : build_plots(records, spec)) {
    write_text_file(out_dir / plot.file, render_svg(plot));
    written.push_back(out_dir / plot.file);
  }
  return written;
}

/// Full run: experiment, plots and manifest.json (spec echo, baselines,
/// failures, artifact hashes, wall time). `wall_time_seconds` is the only
/// field that differs between otherwise identical runs.
inline ExperimentResult run_and_emit(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                                     Parallelism par = {}) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result = run_experiment(spec, par);
  const auto files = emit_plots(result.records, spec, out_dir, result.baselines);
  Json manifest;
  manifest["spec"] = experiment_to_json(spec);
  Json artifacts = Json::array();
  for (const auto& f : files)
    artifacts.push_back({{"file", f.filename().string()}, {"fnv1a64", hex64(fnv1a64(read_text_file(f)))}});
  manifest["artifacts"] = artifacts;
  Json base = Json::array();
  for (const auto& b : result.baselines) base.push_back({{"sigma2", b.sigma2}, {"mmse", b.mmse}, {"stderr", b.stderr_}});
  manifest["bayes_mmse"] = base;
  Json fails = Json::array();
  for (const auto& f : result.failures)
    fails.push_back({{"sweep_value", f.sweep_value}, {"seed", f.seed}, {"error", f.error}, {"message", f.message}});
  manifest["failures"] = fails;
  manifest["record_count"] = result.records.size();
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace pdenoise
