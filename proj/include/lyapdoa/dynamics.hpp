#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lyapdoa/error.hpp"
#include "lyapdoa/expr.hpp"

namespace lyapdoa {

using Vec = std::vector<double>;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

/// Autonomous vector field x' = f(x) with an equilibrium at the origin.
/// Immutable after construction and safe to share between threads.
class DynamicalSystem {
 public:
  DynamicalSystem() = default;

  DynamicalSystem(std::string name, int n, std::vector<expr::NodePtr> rhs, expr::ParameterMap params)
      : name_(std::move(name)), n_(n), rhs_(std::move(rhs)), params_(std::move(params)), tape_(rhs_) {
    if (n_ <= 0) throw ConfigError("state dimension must be positive");
    if (static_cast<int>(rhs_.size()) != n_)
      throw ConfigError("arity mismatch: " + std::to_string(rhs_.size()) + " components for n = " +
                        std::to_string(n_));
  }

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] int dim() const noexcept { return n_; }
  [[nodiscard]] std::span<const expr::NodePtr> rhs() const noexcept { return rhs_; }
  [[nodiscard]] const expr::ParameterMap& params() const noexcept { return params_; }
  [[nodiscard]] const expr::Tape& tape() const noexcept { return tape_; }

  /// Canonical source text; parse_system(source(), dim()) is structurally identical.
  [[nodiscard]] std::string source() const { return expr::print_system(rhs_); }

  void eval(std::span<const double> x, std::span<double> dx) const {
    thread_local std::vector<double> scratch;
    if (scratch.size() < tape_.size()) scratch.resize(tape_.size());
    tape_.eval(x, dx, scratch);
  }

  [[nodiscard]] Vec eval(std::span<const double> x) const {
    Vec dx(static_cast<std::size_t>(n_));
    eval(x, dx);
    return dx;
  }

  /// Largest |f_i(0)|; zero for a valid system.
  [[nodiscard]] double equilibrium_residual() const {
    const Vec zero(static_cast<std::size_t>(n_), 0.0);
    double r = 0.0;
    for (double v : eval(zero)) r = std::max(r, std::abs(v));
    return r;
  }

  void require_equilibrium_at_origin(double tol = 1e-12) const {
    const double r = equilibrium_residual();
    if (!(r <= tol))
      throw ConfigError("system '" + name_ + "' has no equilibrium at the origin (|f(0)| = " +
                        std::to_string(r) + "); shift coordinates first");
  }

  /// FNV-1a over the canonical source; identifies a system in file sidecars.
  [[nodiscard]] std::uint64_t hash() const { return fnv1a(source()); }

 private:
  std::string name_;
  int n_ = 0;
  std::vector<expr::NodePtr> rhs_;
  expr::ParameterMap params_;
  expr::Tape tape_;
};

/// Parse semicolon-separated components in x1..xn. Rejects unknown
/// identifiers and component counts other than n.
inline DynamicalSystem parse_system(std::string_view source, int n, const expr::ParameterMap& params = {},
                                    std::string name = "user") {
  if (n <= 0) throw ConfigError("state dimension must be positive");
  expr::Parser parser(source, n, params);
  auto comps = parser.parse_system();
  if (static_cast<int>(comps.size()) != n)
    throw ParseError("arity mismatch: expected " + std::to_string(n) + " components, found " +
                         std::to_string(comps.size()),
                     source.size());
  return DynamicalSystem(std::move(name), n, std::move(comps), params);
}

enum class SampleLabel { Stable, Unstable, Counterexample };

/// State x with its lifted features z = [x, f, f', ..., f^(d-1)] and
/// zdot = [f, f', ..., f^(d)].
struct LiftedSample {
  Vec x;
  Vec z;
  Vec zdot;
  SampleLabel label = SampleLabel::Stable;
};

/// Reusable buffers for repeated lifting on one thread.
class LiftWorkspace {
 public:
  std::vector<double> xs, fs, scratch;
};

/// Writes z and zdot (each n*(d+1) long) for state x.
///
/// The trajectory through x is expanded as x(t) = c_0 + c_1 t + ... + c_{d+1} t^{d+1}
/// by the Taylor recursion c_{k+1} = [f(x(t))]_k / (k+1); the total derivatives
/// along the flow are then f^(i)(x) = (i+1)! c_{i+1}.
inline void lift_into(const DynamicalSystem& sys, std::span<const double> x, int d, std::span<double> z,
                      std::span<double> zdot, LiftWorkspace& ws) {
  if (d < 1) throw ConfigError("lift order d must be >= 1");
  const auto n = static_cast<std::size_t>(sys.dim());
  const auto len = static_cast<std::size_t>(d) + 2;  // coefficients c_0..c_{d+1}
  ws.xs.assign(n * len, 0.0);
  ws.fs.assign(n * len, 0.0);
  ws.scratch.resize((sys.tape().size() + 3) * len);
  for (std::size_t i = 0; i < n; ++i) ws.xs[i * len] = x[i];

  for (std::size_t k = 0; k + 1 < len; ++k) {
    // [f(x(t))]_k depends only on c_0..c_k, which are already known.
    sys.tape().eval_jet(ws.xs, len, ws.fs, ws.scratch, x);
    for (std::size_t i = 0; i < n; ++i) ws.xs[i * len + k + 1] = ws.fs[i * len + k] / static_cast<double>(k + 1);
  }

  double fact = 1.0;  // k!
  for (std::size_t k = 0; k <= static_cast<std::size_t>(d) + 1; ++k) {
    if (k > 0) fact *= static_cast<double>(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double deriv = fact * ws.xs[i * len + k];
      if (k <= static_cast<std::size_t>(d)) z[k * n + i] = deriv;
      if (k >= 1) zdot[(k - 1) * n + i] = deriv;
    }
  }
}

inline LiftedSample lift(const DynamicalSystem& sys, std::span<const double> x, int d,
                         SampleLabel label = SampleLabel::Stable) {
  if (static_cast<int>(x.size()) != sys.dim()) throw ConfigError("state has wrong dimension");
  LiftedSample s;
  s.x.assign(x.begin(), x.end());
  const auto p = static_cast<std::size_t>(sys.dim() * (d + 1));
  s.z.assign(p, 0.0);
  s.zdot.assign(p, 0.0);
  s.label = label;
  thread_local LiftWorkspace ws;
  lift_into(sys, x, d, s.z, s.zdot, ws);
  return s;
}

/// Benchmark systems, parameters p1 = p2 = p3 = 0.5.
inline DynamicalSystem builtin(std::string_view name) {
  const expr::ParameterMap params{{"p1", 0.5}, {"p2", 0.5}, {"p3", 0.5}};
  if (name == "vdp2") return parse_system("x2; -2*x1 - 3*x2 + x1^2*x2", 2, {}, "vdp2");
  if (name == "ex2_2d")
    return parse_system("-x1 + x1*x2^2; x1 - x2 + x1^2*x2 - x1*x2^2", 2, {}, "ex2_2d");
  if (name == "ex3_2d")
    return parse_system("x2 + p1*(x1/(x2^2 + 1)); -x1 - x2 + p2*x1^2", 2, params, "ex3_2d");
  if (name == "sys3d")
    return parse_system("x2 + p3*x3 + p1*(x1/(x2^2 + 1)); -x1 - x2 + p2*x1^2; p3*(-2*x1 - 2*x3 - x1^2)", 3,
                        params, "sys3d");
  if (name == "sys5d")
    return parse_system(
        "x2; -2*x1 - 3*x2 + x1^2*x2 - x4; x4 + p3*x5 + p1*(x3/(x4^2 + 1)); -x3 - x4 + p2*x3^2; "
        "p3*(-2*x3 - 2*x5 - x3^2)",
        5, params, "sys5d");
  throw ConfigError("unknown benchmark system '" + std::string(name) +
                    "' (expected vdp2, ex2_2d, ex3_2d, sys3d or sys5d)");
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"vdp2", "ex2_2d", "ex3_2d", "sys3d", "sys5d"};
  return names;
}

}  // namespace lyapdoa
