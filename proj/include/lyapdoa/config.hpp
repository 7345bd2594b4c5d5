#pragma once

// Key-value run configuration.
//
//   # comment
//   system = vdp2                 builtin name or DSL source, e.g. "x2; -x1 + mu*x2"
//   system.file = sys.txt         DSL source read from a file (instead of `system`)
//   param.mu = 1.5                parameter binding for DSL sources
//   roi.lower = -4, -10
//   roi.upper = 4, 10
//   grid.points_per_dim = 30
//   lift.d = 2
//   learner.epsilon / learner.delta / learner.alpha_zero_tol / learner.route_counterexamples
//   lp.feas_tol / lp.gap_tol / lp.max_iters
//   loop.i_max / loop.dedup_tol
//   sim.integrator / sim.rk4_step / sim.rtol / sim.atol / sim.t_max / sim.r_conv / sim.r_div
//   verifier.n_starts / verifier.r0 / verifier.fd_step / verifier.max_inner_iters /
//     verifier.local_tol / verifier.feas_tol / verifier.audit_factor / verifier.intersect_roi /
//     verifier.origin_component / verifier.component_nodes
//   admm.m / admm.rho / admm.eps_bar / admm.max_iters / admm.adaptive_rho   (any admm.* key enables ADMM)
//   volume.samples / true_volume.grid / audit.samples
//   contour.axes = 1, 2  /  contour.fixed = 0, 0, 0  /  contour.resolution = 200
//   seed = 1
//   output.dir = out
//
// Later lines override earlier ones. Relative paths are resolved against the
// directory of the config file.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lyapdoa/doa.hpp"

namespace lyapdoa {

struct ContourConfig {
  int axis_a = 0;
  int axis_b = 1;
  Vec fixed;  // empty: zeros
  int resolution = 200;
};

struct FileConfig {
  RunConfig run;
  ContourConfig contour;
  std::string output_dir;  // empty: not set in the file
  std::filesystem::path base_dir = ".";
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline Vec parse_list(const std::string& v) {
  Vec out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_real(cell));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline long long parse_int(const std::string& v) {
  const double d = parse_real(v);
  if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError("'" + v + "' is not an integer");
  return static_cast<long long>(d);
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

inline std::string list_text(const Vec& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_real(v[i]);
  return s;
}

using Setter = std::function<void(FileConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&](const char* key, auto member) {
      t[key] = [member](FileConfig& c, const std::string& v) { member(c) = parse_real(v); };
    };
    auto integer = [&](const char* key, auto member) {
      t[key] = [member](FileConfig& c, const std::string& v) {
        using T = std::remove_reference_t<decltype(member(c))>;
        const long long k = parse_int(v);
        if constexpr (std::is_unsigned_v<T>)
          if (k < 0) throw ConfigError("must be non-negative");
        member(c) = static_cast<T>(k);
      };
    };
    auto boolean = [&](const char* key, auto member) {
      t[key] = [member](FileConfig& c, const std::string& v) { member(c) = parse_bool(v); };
    };
    auto admm = [](FileConfig& c) -> AdmmConfig& {
      if (!c.run.admm) c.run.admm.emplace();
      return *c.run.admm;
    };

    t["system"] = [](FileConfig& c, const std::string& v) { c.run.system = unquote(v); };
    t["system.file"] = [](FileConfig& c, const std::string& v) {
      auto p = std::filesystem::path(unquote(v));
      if (p.is_relative()) p = c.base_dir / p;
      std::ifstream is(p);
      if (!is) throw ConfigError("cannot read " + p.string());
      std::stringstream ss;
      ss << is.rdbuf();
      c.run.system = trim(ss.str());
    };
    t["roi.lower"] = [](FileConfig& c, const std::string& v) { c.run.roi.lower = parse_list(v); };
    t["roi.upper"] = [](FileConfig& c, const std::string& v) { c.run.roi.upper = parse_list(v); };
    integer("grid.points_per_dim", [](FileConfig& c) -> int& { return c.run.grid; });
    integer("lift.d", [](FileConfig& c) -> int& { return c.run.d; });
    real("learner.epsilon", [](FileConfig& c) -> double& { return c.run.learner.epsilon; });
    real("learner.delta", [](FileConfig& c) -> double& { return c.run.learner.delta; });
    real("learner.alpha_zero_tol", [](FileConfig& c) -> double& { return c.run.learner.alpha_zero_tol; });
    boolean("learner.route_counterexamples", [](FileConfig& c) -> bool& { return c.run.learner.route_counterexamples; });
    real("lp.feas_tol", [](FileConfig& c) -> double& { return c.run.learner.tol.feas_tol; });
    real("lp.gap_tol", [](FileConfig& c) -> double& { return c.run.learner.tol.gap_tol; });
    integer("lp.max_iters", [](FileConfig& c) -> int& { return c.run.learner.tol.max_iters; });
    integer("loop.i_max", [](FileConfig& c) -> int& { return c.run.i_max; });
    real("loop.dedup_tol", [](FileConfig& c) -> double& { return c.run.dedup_tol; });
    t["sim.integrator"] = [](FileConfig& c, const std::string& v) { c.run.sim.integrator = parse_integrator(v); };
    real("sim.rk4_step", [](FileConfig& c) -> double& { return c.run.sim.rk4_step; });
    real("sim.rtol", [](FileConfig& c) -> double& { return c.run.sim.rtol; });
    real("sim.atol", [](FileConfig& c) -> double& { return c.run.sim.atol; });
    real("sim.t_max", [](FileConfig& c) -> double& { return c.run.sim.t_max; });
    real("sim.r_conv", [](FileConfig& c) -> double& { return c.run.sim.r_conv; });
    real("sim.r_div", [](FileConfig& c) -> double& { return c.run.sim.r_div; });
    integer("verifier.n_starts", [](FileConfig& c) -> int& { return c.run.verifier.n_starts; });
    real("verifier.r0", [](FileConfig& c) -> double& { return c.run.verifier.r0; });
    real("verifier.fd_step", [](FileConfig& c) -> double& { return c.run.verifier.fd_step; });
    integer("verifier.max_inner_iters", [](FileConfig& c) -> int& { return c.run.verifier.max_inner_iters; });
    real("verifier.local_tol", [](FileConfig& c) -> double& { return c.run.verifier.local_tol; });
    real("verifier.feas_tol", [](FileConfig& c) -> double& { return c.run.verifier.feas_tol; });
    integer("verifier.audit_factor", [](FileConfig& c) -> int& { return c.run.verifier.audit_factor; });
    boolean("verifier.intersect_roi", [](FileConfig& c) -> bool& { return c.run.verifier.intersect_roi; });
    boolean("verifier.origin_component", [](FileConfig& c) -> bool& { return c.run.verifier.origin_component; });
    integer("verifier.component_nodes", [](FileConfig& c) -> int& { return c.run.verifier.component_nodes; });
    integer("admm.m", [admm](FileConfig& c) -> int& { return admm(c).m; });
    real("admm.rho", [admm](FileConfig& c) -> double& { return admm(c).rho; });
    real("admm.eps_bar", [admm](FileConfig& c) -> double& { return admm(c).eps_bar; });
    integer("admm.max_iters", [admm](FileConfig& c) -> int& { return admm(c).max_iters; });
    boolean("admm.adaptive_rho", [admm](FileConfig& c) -> bool& { return admm(c).adaptive_rho; });
    integer("volume.samples", [](FileConfig& c) -> std::uint64_t& { return c.run.volume_samples; });
    integer("true_volume.grid", [](FileConfig& c) -> int& { return c.run.true_grid; });
    integer("audit.samples", [](FileConfig& c) -> int& { return c.run.audit_samples; });
    t["contour.axes"] = [](FileConfig& c, const std::string& v) {
      const Vec a = parse_list(v);
      if (a.size() != 2 || a[0] != std::floor(a[0]) || a[1] != std::floor(a[1]))
        throw ConfigError("expects two 1-based axis indices");
      c.contour.axis_a = static_cast<int>(a[0]) - 1;
      c.contour.axis_b = static_cast<int>(a[1]) - 1;
    };
    t["contour.fixed"] = [](FileConfig& c, const std::string& v) { c.contour.fixed = parse_list(v); };
    integer("contour.resolution", [](FileConfig& c) -> int& { return c.contour.resolution; });
    t["seed"] = [](FileConfig& c, const std::string& v) {
      const long long k = parse_int(v);
      if (k < 0) throw ConfigError("must be non-negative");
      c.run.seed = static_cast<std::uint64_t>(k);
    };
    t["output.dir"] = [](FileConfig& c, const std::string& v) {
      auto p = std::filesystem::path(unquote(v));
      c.output_dir = (p.is_relative() ? c.base_dir / p : p).lexically_normal().string();
    };
    return t;
  }();
  return table;
}

}  // namespace config_detail

/// Applies one `key = value` assignment. `param.<name>` binds a DSL parameter.
inline void apply_setting(FileConfig& c, const std::string& key, const std::string& value) {
  if (key.rfind("param.", 0) == 0 && key.size() > 6) {
    c.run.parameters[key.substr(6)] = parse_real(value);
    return;
  }
  const auto& table = config_detail::setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key");
  it->second(c, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : config_detail::setters()) keys.push_back(k);
  keys.push_back("param.<name>");
  return keys;
}

/// Parses a sequence of "key = value" lines; every bad line is reported in a
/// single ConfigError.
inline void apply_lines(FileConfig& c, const std::vector<std::string>& lines, const std::string& origin) {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(i + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected key = value");
      continue;
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    try {
      apply_setting(c, key, value);
    } catch (const ConfigError& e) {
      errors.push_back(where + ": " + key + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

inline FileConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".",
                               const std::string& origin = "<config>") {
  FileConfig c;
  c.base_dir = base_dir;
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) lines.push_back(line);
  apply_lines(c, lines, origin);
  return c;
}

inline FileConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(ss.str(), base, path.string());
}

/// Applies "key=value" overrides (command-line --set), after the file.
inline void apply_overrides(FileConfig& c, const std::vector<std::string>& overrides) {
  apply_lines(c, overrides, "--set");
}

/// Output directory precedence: --out flag, output.dir, $LYAPDOA_OUTPUT_DIR, "lyapdoa_out".
inline std::string resolve_output_dir(const FileConfig& c, const std::string& flag = {}) {
  if (!flag.empty()) return flag;
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv("LYAPDOA_OUTPUT_DIR"); env && *env) return env;
  return "lyapdoa_out";
}

/// Serialises the configuration back to the key-value form (parameters and
/// the output directory included; system.file is inlined as `system`).
inline std::string to_config_text(const FileConfig& c) {
  using config_detail::list_text;
  const RunConfig& r = c.run;
  std::ostringstream os;
  auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv("system", "\"" + r.system + "\"");
  for (const auto& [name, value] : r.parameters) kv("param." + name, format_real(value));
  kv("roi.lower", list_text(r.roi.lower));
  kv("roi.upper", list_text(r.roi.upper));
  kv("grid.points_per_dim", std::to_string(r.grid));
  kv("lift.d", std::to_string(r.d));
  kv("learner.epsilon", format_real(r.learner.epsilon));
  kv("learner.delta", format_real(r.learner.delta));
  kv("learner.alpha_zero_tol", format_real(r.learner.alpha_zero_tol));
  kv("learner.route_counterexamples", b(r.learner.route_counterexamples));
  kv("lp.feas_tol", format_real(r.learner.tol.feas_tol));
  kv("lp.gap_tol", format_real(r.learner.tol.gap_tol));
  kv("lp.max_iters", std::to_string(r.learner.tol.max_iters));
  kv("loop.i_max", std::to_string(r.i_max));
  kv("loop.dedup_tol", format_real(r.dedup_tol));
  kv("sim.integrator", integrator_name(r.sim.integrator));
  kv("sim.rk4_step", format_real(r.sim.rk4_step));
  kv("sim.rtol", format_real(r.sim.rtol));
  kv("sim.atol", format_real(r.sim.atol));
  kv("sim.t_max", format_real(r.sim.t_max));
  kv("sim.r_conv", format_real(r.sim.r_conv));
  kv("sim.r_div", format_real(r.sim.r_div));
  kv("verifier.n_starts", std::to_string(r.verifier.n_starts));
  kv("verifier.r0", format_real(r.verifier.r0));
  kv("verifier.fd_step", format_real(r.verifier.fd_step));
  kv("verifier.max_inner_iters", std::to_string(r.verifier.max_inner_iters));
  kv("verifier.local_tol", format_real(r.verifier.local_tol));
  kv("verifier.feas_tol", format_real(r.verifier.feas_tol));
  kv("verifier.audit_factor", std::to_string(r.verifier.audit_factor));
  kv("verifier.intersect_roi", b(r.verifier.intersect_roi));
  kv("verifier.origin_component", b(r.verifier.origin_component));
  kv("verifier.component_nodes", std::to_string(r.verifier.component_nodes));
  if (r.admm) {
    kv("admm.m", std::to_string(r.admm->m));
    kv("admm.rho", format_real(r.admm->rho));
    kv("admm.eps_bar", format_real(r.admm->eps_bar));
    kv("admm.max_iters", std::to_string(r.admm->max_iters));
    kv("admm.adaptive_rho", b(r.admm->adaptive_rho));
  }
  kv("volume.samples", std::to_string(r.volume_samples));
  kv("true_volume.grid", std::to_string(r.true_grid));
  kv("audit.samples", std::to_string(r.audit_samples));
  kv("contour.axes", std::to_string(c.contour.axis_a + 1) + ", " + std::to_string(c.contour.axis_b + 1));
  if (!c.contour.fixed.empty()) kv("contour.fixed", list_text(c.contour.fixed));
  kv("contour.resolution", std::to_string(c.contour.resolution));
  kv("seed", std::to_string(r.seed));
  if (!c.output_dir.empty()) kv("output.dir", "\"" + c.output_dir + "\"");
  return os.str();
}

}  // namespace lyapdoa
