#pragma once

// Region of interest, grid sampling and simulation-based labelling.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/error.hpp"
#include "lyapdoa/integrate.hpp"
#include "lyapdoa/log.hpp"
#include "lyapdoa/parallel.hpp"

namespace lyapdoa {

/// Axis-aligned box lower <= x <= upper containing the origin in its interior.
struct Roi {
  Vec lower;
  Vec upper;

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(lower.size()); }

  void validate() const {
    if (lower.empty() || lower.size() != upper.size()) throw ConfigError("ROI bounds must have equal, positive length");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) throw ConfigError("ROI lower bound must be below upper bound on axis " + std::to_string(i + 1));
      if (!(lower[i] < 0.0 && 0.0 < upper[i]))
        throw ConfigError("ROI must contain the origin strictly inside (axis " + std::to_string(i + 1) + ")");
    }
  }

  [[nodiscard]] double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lower.size(); ++i) v *= upper[i] - lower[i];
    return v;
  }

  [[nodiscard]] double half_diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < lower.size(); ++i) s += (upper[i] - lower[i]) * (upper[i] - lower[i]);
    return 0.5 * std::sqrt(s);
  }

  [[nodiscard]] bool contains(std::span<const double> x, double slack = 0.0) const {
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
    return true;
  }

  void clip(std::span<double> x) const {
    for (std::size_t i = 0; i < lower.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  }

  friend bool operator==(const Roi&, const Roi&) = default;
};

enum class IntegratorKind { Rk4Fixed, Rk45Adaptive };

struct SimConfig {
  IntegratorKind integrator = IntegratorKind::Rk45Adaptive;
  double rk4_step = 1e-2;
  double rtol = 1e-8;
  double atol = 1e-10;
  double t_max = 100.0;
  /// Absolute convergence radius; <= 0 selects 1e-2 * ROI half-diagonal.
  double r_conv = 0.0;
  /// Divergence radius as a multiple of the ROI half-diagonal.
  double r_div = 2.0;

  void validate() const {
    if (!(t_max > 0.0)) throw ConfigError("sim.t_max must be positive");
    if (!(r_conv >= 0.0)) throw ConfigError("sim.r_conv must be non-negative (0 selects the default)");
    if (!(r_div > 1.0)) throw ConfigError("sim.r_div must exceed 1");
    if (!(rtol > 0.0 && atol > 0.0)) throw ConfigError("sim tolerances must be positive");
    if (integrator == IntegratorKind::Rk4Fixed && !(rk4_step > 0.0)) throw ConfigError("sim.rk4_step must be positive");
  }

  [[nodiscard]] double convergence_radius(const Roi& roi) const {
    return r_conv > 0.0 ? r_conv : 1e-2 * roi.half_diagonal();
  }
  [[nodiscard]] double divergence_radius(const Roi& roi) const { return r_div * roi.half_diagonal(); }
};

inline constexpr std::uint64_t kMaxLatticePoints = 100'000'000;

inline std::uint64_t lattice_size(int n, int n_g) {
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) {
    total *= static_cast<std::uint64_t>(n_g);
    if (total > kMaxLatticePoints) throw ConfigError("grid of " + std::to_string(n_g) + "^" + std::to_string(n) +
                                                     " points exceeds the 1e8 lattice limit");
  }
  return total;
}

/// Coordinate of lattice index k on one axis; both ends are hit exactly.
inline double lattice_coord(double lo, double hi, int k, int n_g) {
  if (k == 0) return lo;
  if (k == n_g - 1) return hi;
  return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_g - 1);
}

/// Point number `index` of the uniform lattice in lexicographic order (x1 slowest).
inline void lattice_point(const Roi& roi, int n_g, std::uint64_t index, std::span<double> out) {
  const int n = roi.dim();
  for (int i = n - 1; i >= 0; --i) {
    const int k = static_cast<int>(index % static_cast<std::uint64_t>(n_g));
    index /= static_cast<std::uint64_t>(n_g);
    out[static_cast<std::size_t>(i)] = lattice_coord(roi.lower[i], roi.upper[i], k, n_g);
  }
}

/// Uniform lattice of n_g^n points including both ROI corners per axis.
inline std::vector<Vec> grid(const Roi& roi, int n_g) {
  roi.validate();
  if (n_g < 2) throw ConfigError("grid needs at least 2 points per dimension");
  const std::uint64_t total = lattice_size(roi.dim(), n_g);
  std::vector<Vec> pts(total, Vec(static_cast<std::size_t>(roi.dim())));
  for (std::uint64_t k = 0; k < total; ++k) lattice_point(roi, n_g, k, pts[k]);
  return pts;
}

enum class Stability { Stable = 0, Unstable = 1 };

struct Classification {
  Stability label = Stability::Unstable;
  IntegrationStatus status = IntegrationStatus::Finished;
  double t = 0.0;
  bool diverged = false;
};

/// Simulates from x0. Stable iff the trajectory enters ||x|| <= r_conv before
/// t_max without first leaving the divergence ball. Timeouts and integrator
/// failures count as unstable.
inline Classification classify_detailed(const DynamicalSystem& sys, std::span<const double> x0, const Roi& roi,
                                        const SimConfig& cfg) {
  const double r_in = cfg.convergence_radius(roi);
  const double r_out = cfg.divergence_radius(roi);
  Classification res;
  bool converged = false;
  auto observe = [&](double, std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    const double norm = std::sqrt(s);
    if (norm <= r_in) {
      converged = true;
      return true;
    }
    if (!(norm <= r_out)) {
      res.diverged = true;
      return true;
    }
    return false;
  };
  auto rhs = [&sys](std::span<const double> x, std::span<double> dx) { sys.eval(x, dx); };
  Vec x(x0.begin(), x0.end());
  IntegrationOutcome out;
  if (cfg.integrator == IntegratorKind::Rk4Fixed) {
    out = integrate_rk4(rhs, std::span<double>(x), cfg.t_max, cfg.rk4_step, observe);
  } else {
    AdaptiveTolerances tol;
    tol.rtol = cfg.rtol;
    tol.atol = cfg.atol;
    out = integrate_dp45(rhs, std::span<double>(x), cfg.t_max, tol, observe);
  }
  res.status = out.status;
  res.t = out.t;
  res.label = converged ? Stability::Stable : Stability::Unstable;
  if (out.status == IntegrationStatus::StepUnderflow || out.status == IntegrationStatus::StepLimit ||
      out.status == IntegrationStatus::NonFinite) {
    std::ostringstream os;
    os << "integration failed from x0 = (";
    for (std::size_t i = 0; i < x0.size(); ++i) os << (i ? ", " : "") << x0[i];
    os << ") at t = " << out.t << "; classified unstable";
    log(LogLevel::Debug, os.str());
  }
  return res;
}

inline Stability classify(const DynamicalSystem& sys, std::span<const double> x0, const Roi& roi,
                          const SimConfig& cfg) {
  return classify_detailed(sys, x0, roi, cfg).label;
}

/// Grid points in lexicographic order with their simulation labels.
struct SampleSet {
  Roi roi;
  int grid_points_per_dim = 0;
  std::vector<Vec> points;
  std::vector<Stability> labels;

  [[nodiscard]] std::size_t size() const noexcept { return points.size(); }

  [[nodiscard]] std::vector<Vec> stable() const { return select(Stability::Stable); }
  [[nodiscard]] std::vector<Vec> unstable() const { return select(Stability::Unstable); }

  [[nodiscard]] std::size_t count(Stability s) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), s));
  }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  [[nodiscard]] std::vector<Vec> select(Stability s) const {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (labels[i] == s) out.push_back(points[i]);
    return out;
  }
};

inline SampleSet build_dataset(const DynamicalSystem& sys, const Roi& roi, int n_g, const SimConfig& cfg) {
  roi.validate();
  cfg.validate();
  if (roi.dim() != sys.dim()) throw ConfigError("ROI dimension does not match the system");
  SampleSet set;
  set.roi = roi;
  set.grid_points_per_dim = n_g;
  set.points = grid(roi, n_g);
  set.labels.assign(set.points.size(), Stability::Unstable);
  parallel_for(set.points.size(), [&](std::size_t i) { set.labels[i] = classify(sys, set.points[i], roi, cfg); }, 16);
  return set;
}

// ---------------------------------------------------------------------------
// Persistence: CSV "x1,...,xn,label" (0 = stable, 1 = unstable) + JSON sidecar.

inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("malformed number '" + std::string(s) + "'");
  return v;
}

inline const char* integrator_name(IntegratorKind k) {
  return k == IntegratorKind::Rk4Fixed ? "rk4_fixed" : "rk45_adaptive";
}

inline IntegratorKind parse_integrator(std::string_view s) {
  if (s == "rk4_fixed") return IntegratorKind::Rk4Fixed;
  if (s == "rk45_adaptive") return IntegratorKind::Rk45Adaptive;
  throw ConfigError("unknown integrator '" + std::string(s) + "' (rk4_fixed or rk45_adaptive)");
}

inline nlohmann::json to_json(const Roi& roi) { return {{"lower", roi.lower}, {"upper", roi.upper}}; }
inline Roi roi_from_json(const nlohmann::json& j) {
  Roi r{j.at("lower").get<Vec>(), j.at("upper").get<Vec>()};
  r.validate();
  return r;
}

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"integrator", integrator_name(c.integrator)}, {"rk4_step", c.rk4_step}, {"rtol", c.rtol},
          {"atol", c.atol}, {"t_max", c.t_max}, {"r_conv", c.r_conv}, {"r_div", c.r_div}};
}
inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.integrator = parse_integrator(j.at("integrator").get<std::string>());
  c.rk4_step = j.at("rk4_step").get<double>();
  c.rtol = j.at("rtol").get<double>();
  c.atol = j.at("atol").get<double>();
  c.t_max = j.at("t_max").get<double>();
  c.r_conv = j.at("r_conv").get<double>();
  c.r_div = j.at("r_div").get<double>();
  return c;
}

inline void write_dataset_csv(std::ostream& os, const SampleSet& set) {
  const int n = set.roi.dim();
  for (int i = 0; i < n; ++i) os << "x" << (i + 1) << ",";
  os << "label\n";
  for (std::size_t k = 0; k < set.points.size(); ++k) {
    for (double v : set.points[k]) os << format_real(v) << ",";
    os << static_cast<int>(set.labels[k]) << "\n";
  }
}

/// Reads the CSV body; roi and grid size come from the sidecar.
inline void read_dataset_csv(std::istream& is, SampleSet& set) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back().rfind("label", 0) != 0)
    throw ConfigError("dataset CSV header must be x1,...,xn,label");
  const std::size_t n = header.size() - 1;
  for (std::size_t i = 0; i < n; ++i)
    if (header[i] != "x" + std::to_string(i + 1)) throw ConfigError("dataset CSV header must be x1,...,xn,label");
  set.points.clear();
  set.labels.clear();
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    Vec x;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != n + 1) throw ConfigError("dataset CSV row " + std::to_string(row) + " has wrong column count");
    for (std::size_t i = 0; i < n; ++i) x.push_back(parse_real(cells[i]));
    const double lab = parse_real(cells[n]);
    if (lab != 0.0 && lab != 1.0) throw ConfigError("dataset CSV row " + std::to_string(row) + ": label must be 0 or 1");
    set.points.push_back(std::move(x));
    set.labels.push_back(lab == 0.0 ? Stability::Stable : Stability::Unstable);
  }
}

inline nlohmann::json dataset_sidecar(const SampleSet& set, const SimConfig& cfg, const DynamicalSystem& sys) {
  return {{"roi", to_json(set.roi)},
          {"grid_points_per_dim", set.grid_points_per_dim},
          {"sim", to_json(cfg)},
          {"system", {{"name", sys.name()}, {"n", sys.dim()}, {"source", sys.source()}, {"hash", hex64(sys.hash())}}},
          {"counts", {{"stable", set.count(Stability::Stable)}, {"unstable", set.count(Stability::Unstable)}}}};
}

/// Content hash of the labelled points (independent of file formatting).
inline std::string dataset_hash(const SampleSet& set) {
  std::ostringstream os;
  write_dataset_csv(os, set);
  return hex64(fnv1a(os.str()));
}

inline std::string sidecar_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const auto slash = csv_path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return csv_path + ".json";
  return csv_path.substr(0, dot) + ".json";
}

inline void save_dataset(const std::string& csv_path, const SampleSet& set, const SimConfig& cfg,
                         const DynamicalSystem& sys) {
  {
    std::ofstream os(csv_path);
    if (!os) throw Error("cannot write " + csv_path);
    write_dataset_csv(os, set);
  }
  std::ofstream js(sidecar_path(csv_path));
  if (!js) throw Error("cannot write " + sidecar_path(csv_path));
  js << dataset_sidecar(set, cfg, sys).dump(2) << "\n";
}

struct LoadedDataset {
  SampleSet set;
  nlohmann::json sidecar;  // null when absent
};

inline LoadedDataset load_dataset(const std::string& csv_path) {
  LoadedDataset out;
  std::ifstream is(csv_path);
  if (!is) throw Error("cannot read dataset " + csv_path);
  read_dataset_csv(is, out.set);
  std::ifstream js(sidecar_path(csv_path));
  if (js) {
    out.sidecar = nlohmann::json::parse(js);
    out.set.roi = roi_from_json(out.sidecar.at("roi"));
    out.set.grid_points_per_dim = out.sidecar.at("grid_points_per_dim").get<int>();
  }
  return out;
}

}  // namespace lyapdoa
