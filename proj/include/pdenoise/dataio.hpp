#pragma once

// Prior sampling, Gaussian corruption and file persistence.
//
// Sampling is split into fixed chunks of kSampleChunk points; chunk c draws
// from CounterRng(derive_seed(seed, label, c)) with label "sample_prior" or
// "corrupt". Point i therefore depends only on (seed, i), so a sample of size
// n is the prefix of any larger sample with the same seed, and the worker
// count never changes the output.
//
// Particle CSV: header `x0,x1,...`, one row per point, values with 17
// significant digits, LF line endings.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "pdenoise/core.hpp"
#include "pdenoise/parallel.hpp"
#include "pdenoise/random.hpp"
#include "pdenoise/stage1.hpp"

namespace pdenoise {

inline constexpr std::size_t kSampleChunk = 4096;

namespace detail {

/// Per-component factor L with L L^T = covariance (symmetric square root).
inline Matrix covariance_root(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// n iid draws from the mixture: component by inverse CDF on the weights,
/// then mean + L z with z ~ N(0, I).
inline ParticleSet sample_prior(const GaussianMixture& prior, std::size_t n, std::size_t dim, std::uint64_t seed,
                                Parallelism par = {}) {
  const GaussianMixture mix = validate_mixture(prior);
  if (n < 1) throw ValidationError("sample_prior: n must be at least 1");
  if (mix.dim() != dim)
    throw ValidationError("sample_prior: prior dimension " + std::to_string(mix.dim()) + " does not match " +
                          std::to_string(dim));
  const std::size_t k = mix.size();
  std::vector<double> cumulative(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) cumulative[i] = (acc += mix.weights[i]);
  std::vector<Matrix> roots(k);
  std::vector<double> scales(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (mix.kinds[i] == ComponentKind::full) roots[i] = detail::covariance_root(mix.covariances[i]);
    if (mix.kinds[i] == ComponentKind::isotropic) scales[i] = std::sqrt(mix.covariances[i](0, 0));
  }

  std::vector<double> flat(n * dim);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, par.workers, [&](std::size_t cb, std::size_t ce, unsigned) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
    for (std::size_t c = cb; c < ce; ++c) {
      CounterRng rng(derive_seed(seed, "sample_prior", c));
      const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
      for (std::size_t i = c * kSampleChunk; i < end; ++i) {
        const double u = rng.uniform();
        std::size_t comp = 0;
        while (comp + 1 < k && !(u < cumulative[comp])) ++comp;
        for (Eigen::Index a = 0; a < z.size(); ++a) z(a) = rng.normal();
        double* out = flat.data() + i * dim;
        const Vec& mu = mix.means[comp];
        switch (mix.kinds[comp]) {
          case ComponentKind::point_mass:
            for (std::size_t a = 0; a < dim; ++a) out[a] = mu[a];
            break;
          case ComponentKind::isotropic:
            for (std::size_t a = 0; a < dim; ++a) out[a] = mu[a] + scales[comp] * z(static_cast<Eigen::Index>(a));
            break;
          case ComponentKind::full: {
            const Eigen::VectorXd x = roots[comp] * z;
            for (std::size_t a = 0; a < dim; ++a) out[a] = mu[a] + x(static_cast<Eigen::Index>(a));
            break;
          }
        }
      }
    }
  });
  return ParticleSet(dim, std::move(flat));
}

/// clean + sqrt(sigma2) * z with z iid N(0, I).
inline ParticleSet corrupt(const ParticleSet& clean, double sigma2, std::uint64_t seed, Parallelism par = {}) {
  (void)NoiseModel(sigma2);
  require_nonempty(clean, "corrupt");
  const double scale = std::sqrt(sigma2);
  const std::size_t dim = clean.dim();
  const std::size_t n = clean.count();
  std::vector<double> flat = clean.data();
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, par.workers, [&](std::size_t cb, std::size_t ce, unsigned) {
    for (std::size_t c = cb; c < ce; ++c) {
      CounterRng rng(derive_seed(seed, "corrupt", c));
      const std::size_t end = std::min(n, (c + 1) * kSampleChunk) * dim;
      for (std::size_t j = c * kSampleChunk * dim; j < end; ++j) flat[j] += scale * rng.normal();
    }
  });
  return ParticleSet(dim, std::move(flat));
}

// ---------------------------------------------------------------------------
// Text formatting

/// 17 significant digits; parses back to the identical double.
inline std::string format_g17(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int decimals) {
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  if (res.ec != std::errc{}) return format_g17(v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError(where + ": cannot parse number '" + std::string(text) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// ---------------------------------------------------------------------------
// Files

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string particles_to_csv(const ParticleSet& p) {
  std::string out;
  for (std::size_t k = 0; k < p.dim(); ++k) {
    if (k) out += ',';
    out += 'x';
    out += std::to_string(k);
  }
  out += '\n';
  for (std::size_t i = 0; i < p.count(); ++i) {
    for (std::size_t k = 0; k < p.dim(); ++k) {
      if (k) out += ',';
      out += format_g17(p(i, k));
    }
    out += '\n';
  }
  return out;
}

inline ParticleSet particles_from_csv(const std::string& text, const std::string& source = "<csv>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<double> flat;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (!have_header) {
      for (std::size_t k = 0; k < fields.size(); ++k)
        if (fields[k] != "x" + std::to_string(k))
          throw ParseError(where + ": expected header x0,...,x{d-1}, got '" + line + "'");
      dim = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != dim)
      throw ParseError(where + ": row has " + std::to_string(fields.size()) + " fields, header declares " +
                       std::to_string(dim) + ": '" + line + "'");
    for (auto f : fields) {
      const double v = parse_double(f, where);
      if (!std::isfinite(v)) throw ParseError(where + ": non-finite value");
      flat.push_back(v);
    }
  }
  if (!have_header || flat.empty()) throw ParseError(source + ": no data rows");
  return ParticleSet(dim, std::move(flat));
}

inline void save_particles(const ParticleSet& p, const std::filesystem::path& path) {
  write_text_file(path, particles_to_csv(p));
}

inline ParticleSet load_particles(const std::filesystem::path& path) {
  return particles_from_csv(read_text_file(path), path.string());
}

/// Writes `snapshot_<depth>.csv` for every snapshot plus an `index.csv` with
/// columns depth,time,file. Returns the paths written.
inline std::vector<std::filesystem::path> save_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  std::string index = "depth,time,file\n";
  for (const auto& snap : traj.snapshots) {
    std::ostringstream name;
    name << "snapshot_" << std::setw(6) << std::setfill('0') << snap.depth << ".csv";
    const auto path = dir / name.str();
    save_particles(snap.particles, path);
    written.push_back(path);
    index += std::to_string(snap.depth) + "," + format_g17(snap.time) + "," + name.str() + "\n";
  }
  write_text_file(dir / "index.csv", index);
  written.push_back(dir / "index.csv");
  return written;
}

// ---------------------------------------------------------------------------
// JSON schemas
//
// GaussianMixture:
//   {"weights": [..], "means": [[..], ..],
//    "covariances": [c, ..],            c = number (a^2 I) or d x d matrix
//    "kinds": ["isotropic"|"full"|"point-mass", ..]}   optional
// DenoiseConfig:
//   {"sigma2": f, "beta": f, "beta_c": f|null, "l0": n, "horizon_mult": f,
//    "truncation": "none"|"auto"|radius, "seed": n, "readout_depth": "auto"|n}

using Json = nlohmann::json;

inline Matrix matrix_from_json(const Json& j, std::size_t dim, const std::string& where) {
  const auto d = static_cast<Eigen::Index>(dim);
  if (j.is_number()) return Matrix::Identity(d, d) * j.get<double>();
  if (!j.is_array() || j.size() != dim) throw ParseError(where + ": covariance must be a number or d x d matrix");
  Matrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const Json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || row.size() != dim) throw ParseError(where + ": covariance row has wrong length");
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

inline ComponentKind component_kind_from_string(const std::string& s) {
  if (s == "isotropic") return ComponentKind::isotropic;
  if (s == "full") return ComponentKind::full;
  if (s == "point-mass") return ComponentKind::point_mass;
  throw ParseError("unknown component kind '" + s + "'");
}

inline GaussianMixture mixture_from_json(const Json& j) {
  try {
    GaussianMixture mix;
    mix.weights = j.at("weights").get<std::vector<double>>();
    mix.means = j.at("means").get<std::vector<Vec>>();
    if (mix.means.empty()) throw ParseError("mixture: no means");
    const std::size_t dim = mix.means.front().size();
    const Json& covs = j.at("covariances");
    if (!covs.is_array()) throw ParseError("mixture: covariances must be an array");
    for (std::size_t i = 0; i < covs.size(); ++i) {
      mix.covariances.push_back(matrix_from_json(covs[i], dim, "mixture component " + std::to_string(i)));
      if (!j.contains("kinds")) {
        const bool zero = mix.covariances.back().isZero(0.0);
        mix.kinds.push_back(zero ? ComponentKind::point_mass
                                 : covs[i].is_number() ? ComponentKind::isotropic : ComponentKind::full);
      }
    }
    if (j.contains("kinds"))
      for (const auto& k : j.at("kinds")) mix.kinds.push_back(component_kind_from_string(k.get<std::string>()));
    return validate_mixture(std::move(mix));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("mixture JSON: ") + e.what());
  }
}

inline Json mixture_to_json(const GaussianMixture& mix) {
  Json covs = Json::array();
  Json kinds = Json::array();
  for (std::size_t i = 0; i < mix.size(); ++i) {
    covs.push_back(matrix_to_json(mix.covariances[i]));
    kinds.push_back(to_string(mix.kinds[i]));
  }
  return Json{{"weights", mix.weights}, {"means", mix.means}, {"covariances", covs}, {"kinds", kinds}};
}

inline Truncation truncation_from_json(const Json& j) {
  if (j.is_null()) return Truncation::none();
  if (j.is_number()) return Truncation::fixed(j.get<double>());
  const auto s = j.get<std::string>();
  if (s == "none") return Truncation::none();
  if (s == "auto") return Truncation::automatic();
  throw ParseError("truncation must be \"none\", \"auto\" or a radius, got '" + s + "'");
}

inline Json truncation_to_json(const Truncation& t) {
  switch (t.mode) {
    case Truncation::Mode::none: return "none";
    case Truncation::Mode::automatic: return "auto";
    case Truncation::Mode::radius: return t.radius;
  }
  return "none";
}

inline DenoiseConfig config_from_json(const Json& j) {
  try {
    DenoiseConfig c;
    c.sigma2 = j.at("sigma2").get<double>();
    c.beta = j.at("beta").get<double>();
    if (j.contains("beta_c") && !j.at("beta_c").is_null()) c.beta_c = j.at("beta_c").get<double>();
    if (j.contains("l0")) c.l0 = j.at("l0").get<std::size_t>();
    if (j.contains("horizon_mult")) c.horizon_mult = j.at("horizon_mult").get<double>();
    if (j.contains("truncation")) c.truncation = truncation_from_json(j.at("truncation"));
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("readout_depth")) {
      const Json& r = j.at("readout_depth");
      if (r.is_number()) c.readout_depth = r.get<std::size_t>();
      else if (!r.is_null() && r.get<std::string>() != "auto")
        throw ParseError("readout_depth must be \"auto\" or a layer index");
    }
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("config JSON: ") + e.what());
  }
}

inline Json config_to_json(const DenoiseConfig& c) {
  Json j{{"sigma2", c.sigma2},
         {"beta", c.beta},
         {"l0", c.l0},
         {"horizon_mult", c.horizon_mult},
         {"truncation", truncation_to_json(c.truncation)},
         {"seed", c.seed}};
  j["beta_c"] = c.beta_c ? Json(*c.beta_c) : Json(nullptr);
  j["readout_depth"] = c.readout_depth ? Json(*c.readout_depth) : Json("auto");
  return j;
}

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
}

inline Json load_json(const std::filesystem::path& path) { return parse_json_text(read_text_file(path), path.string()); }

}  // namespace pdenoise
