#pragma once

// Numerical verifier: searches the punctured sublevel set {V <= 1} \ B(0, r0)
// for the largest Vdot and the smallest V.
//
// Each start runs a projected ascent (or descent) on the exact-penalty function
// Vdot - mu * max(0, V - 1) with central finite-difference gradients. The
// puncture is enforced by radial projection and the ROI by clipping. Only
// iterates satisfying V <= 1 + feas_tol are ever reported. A dense lattice
// audit over the ROI runs last and can overrule the local searches.
//
// With origin_component set, {V <= 1} is replaced by its connected component
// through the origin (see component.hpp); islands elsewhere are ignored.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyapdoa/component.hpp"
#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/error.hpp"
#include "lyapdoa/learner.hpp"
#include "lyapdoa/parallel.hpp"
#include "lyapdoa/sampling.hpp"

namespace lyapdoa {

struct VerifierConfig {
  int n_starts = 64;          // random starts in {V <= 1} on top of the sample starts
  double r0 = 0.0;            // 0: 1e-3 * ROI half-diagonal
  double fd_step = 1e-6;      // central differences use fd_step * (1 + |x|)
  int max_inner_iters = 200;
  double local_tol = 1e-9;    // relative to the ROI half-diagonal
  double feas_tol = 1e-9;
  std::uint64_t seed = 1;
  int audit_factor = 2;       // audit lattice resolution multiple; 0 disables
  bool intersect_roi = true;  // restrict the search to the ROI
  bool origin_component = true;  // only the component of {V <= 1} through the origin; needs intersect_roi
  int component_nodes = 0;       // flood-fill lattice nodes per axis; 0: automatic
  bool record_trace = false;

  void validate() const {
    if (n_starts < 0) throw ConfigError("verifier.n_starts must be >= 0");
    if (r0 < 0.0) throw ConfigError("verifier.r0 must be > 0 (or 0 for automatic)");
    if (!(fd_step > 0.0)) throw ConfigError("verifier.fd_step must be > 0");
    if (max_inner_iters < 1) throw ConfigError("verifier.max_inner_iters must be >= 1");
    if (!(local_tol > 0.0)) throw ConfigError("verifier.local_tol must be > 0");
    if (audit_factor < 0) throw ConfigError("verifier.audit_factor must be >= 0");
    if (component_nodes < 0 || component_nodes == 1) throw ConfigError("verifier.component_nodes must be 0 or >= 2");
  }

  [[nodiscard]] double origin_radius(const Roi& roi) const { return r0 > 0.0 ? r0 : 1e-3 * roi.half_diagonal(); }
};

struct StartTrace {
  std::string kind;  // "sample", "counterexample", "random"
  Vec start;
  Vec gamma_x;
  double gamma = 0.0;
  Vec eta_x;
  double eta = 0.0;
  int iterations = 0;
};

struct VerifierResult {
  double gamma_star = -kInf;
  double eta_star = kInf;
  Vec argmax_x;
  Vec argmin_x;
  bool verified = false;
  bool degenerate = false;  // no feasible start outside the origin ball
  int starts_used = 0;
  std::size_t audit_points = 0;
  bool audit_changed = false;  // the lattice audit found a worse point than the local searches
  std::vector<StartTrace> trace;
};

/// Algorithm order: the decrease violation takes priority over positivity.
inline std::optional<Vec> counterexample(const VerifierResult& r) {
  if (r.verified) throw Error("counterexample() called on a verified result");
  if (r.gamma_star >= 0.0) return r.argmax_x;
  if (r.eta_star <= 0.0) return r.argmin_x;
  return std::nullopt;
}

namespace verifier_detail {

struct Eval {
  double V = 0.0;
  double Vdot = 0.0;
};

class Evaluator {
 public:
  Evaluator(const DynamicalSystem& sys, const LyapunovCandidate& c)
      : sys_(sys), c_(c), p_(static_cast<std::size_t>(c.p())), z_(p_), zd_(p_), Pz_(p_) {}

  Eval operator()(std::span<const double> x) {
    lift_into(sys_, x, c_.d, z_, zd_, ws_);
    Eval e;
    for (std::size_t a = 0; a < p_; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < p_; ++b) s += c_.P(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * z_[b];
      Pz_[a] = s;
    }
    for (std::size_t a = 0; a < p_; ++a) {
      e.V += z_[a] * Pz_[a];
      e.Vdot += 2.0 * zd_[a] * Pz_[a];
    }
    return e;
  }

 private:
  const DynamicalSystem& sys_;
  const LyapunovCandidate& c_;
  std::size_t p_;
  std::vector<double> z_, zd_, Pz_;
  LiftWorkspace ws_;
};

inline double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

struct Search {
  const Roi& roi;
  const VerifierConfig& cfg;
  double r0;
  double scale;  // ROI half-diagonal
  const SublevelComponent* component = nullptr;

  [[nodiscard]] bool admissible(const Vec& x, const Eval& e) const {
    return e.V <= 1.0 + cfg.feas_tol && (!component || component->touches(x));
  }

  void project(Vec& x) const {
    if (cfg.intersect_roi) roi.clip(x);
    const double r = norm(x);
    if (r < r0) {
      if (r == 0.0) {
        x[0] = r0;
      } else {
        for (double& v : x) v *= r0 / r;
      }
      if (cfg.intersect_roi) roi.clip(x);
    }
  }

  // sign = +1 maximises Vdot, -1 minimises V. Returns the best feasible point
  // (value in the original orientation) and the iteration count.
  std::pair<std::optional<std::pair<Vec, double>>, int> run(Evaluator& ev, Vec x, int sign) const {
    const std::size_t n = x.size();
    double mu = 10.0;
    auto value = [&](const Eval& e) { return sign > 0 ? e.Vdot : -e.V; };
    auto merit = [&](const Eval& e) { return value(e) - mu * std::max(0.0, e.V - 1.0); };
    project(x);
    Eval ex = ev(x);
    std::optional<std::pair<Vec, double>> best;
    auto consider = [&](const Vec& p, const Eval& e) {
      if (!admissible(p, e)) return;
      if (!best || value(e) > (sign > 0 ? best->second : -best->second))
        best = std::make_pair(p, sign > 0 ? e.Vdot : e.V);
    };
    consider(x, ex);
    double step = 0.05 * scale;
    const double min_step = cfg.local_tol * scale;
    Vec g(n), trial(n), xp(n);
    int it = 0;
    for (; it < cfg.max_inner_iters && step > min_step; ++it) {
      // Central differences of the merit function.
      double gnorm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double h = cfg.fd_step * (1.0 + norm(x));
        xp = x;
        xp[i] = x[i] + h;
        const double fp = merit(ev(xp));
        xp[i] = x[i] - h;
        const double fm = merit(ev(xp));
        g[i] = (fp - fm) / (2.0 * h);
        gnorm += g[i] * g[i];
      }
      gnorm = std::sqrt(gnorm);
      if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
      const double f0 = merit(ex);
      bool moved = false;
      while (step > min_step) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * g[i] / gnorm;
        project(trial);
        const Eval et = ev(trial);
        if (std::isfinite(et.V) && std::isfinite(et.Vdot) && merit(et) > f0) {
          x = trial;
          ex = et;
          consider(x, ex);
          step *= 1.5;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      // Exact penalty: raise the weight while the iterate sits outside the set.
      if (ex.V > 1.0 + cfg.feas_tol && mu < 1e8) mu *= 10.0;
    }
    return {best, it};
  }
};

}  // namespace verifier_detail

/// Starts are the covered stable samples, the previous counterexamples and
/// cfg.n_starts uniform points of {V <= 1} inside the ROI (seeded, in order).
inline VerifierResult verify(const DynamicalSystem& sys, const LyapunovCandidate& cand, const Roi& roi,
                             const VerifierConfig& cfg, const std::vector<Vec>& sample_starts = {},
                             const std::vector<Vec>& previous_counterexamples = {}, int training_grid = 0) {
  cfg.validate();
  roi.validate();
  if (roi.dim() != sys.dim() || cand.n != sys.dim()) throw ConfigError("verify: dimension mismatch");
  const double r0 = cfg.origin_radius(roi);
  std::optional<SublevelComponent> component;
  if (cfg.origin_component && cfg.intersect_roi) component.emplace(sys, cand, roi, cfg.component_nodes);
  const verifier_detail::Search search{roi, cfg, r0, roi.half_diagonal(), component ? &*component : nullptr};
  auto in_component = [&](const Vec& x) { return !component || component->touches(x); };

  struct Start {
    const char* kind;
    Vec x;
  };
  std::vector<Start> starts;
  for (const auto& x : sample_starts)
    if (verifier_detail::norm(x) >= r0 && in_component(x)) starts.push_back({"sample", x});
  for (const auto& x : previous_counterexamples)
    if (in_component(x)) starts.push_back({"counterexample", x});
  {
    std::mt19937_64 rng(cfg.seed);
    verifier_detail::Evaluator ev(sys, cand);
    const int n = roi.dim();
    Vec x(static_cast<std::size_t>(n));
    const long max_tries = 2000L * std::max(cfg.n_starts, 1);
    int found = 0;
    for (long tries = 0; found < cfg.n_starts && tries < max_tries; ++tries) {
      for (int i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] =
            std::uniform_real_distribution<double>(roi.lower[static_cast<std::size_t>(i)], roi.upper[static_cast<std::size_t>(i)])(rng);
      if (verifier_detail::norm(x) < r0) continue;
      if (ev(x).V <= 1.0 && in_component(x)) {
        starts.push_back({"random", x});
        ++found;
      }
    }
  }

  struct Outcome {
    std::optional<std::pair<Vec, double>> gamma, eta;
    int iterations = 0;
  };
  std::vector<Outcome> outcomes(starts.size());
  parallel_for(
      starts.size(),
      [&](std::size_t k) {
        thread_local std::optional<verifier_detail::Evaluator> ev;
        ev.emplace(sys, cand);
        auto [g, ig] = search.run(*ev, starts[k].x, +1);
        auto [e, ie] = search.run(*ev, starts[k].x, -1);
        outcomes[k] = {std::move(g), std::move(e), ig + ie};
      },
      4);

  VerifierResult res;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto& o = outcomes[k];
    if (o.gamma && o.gamma->second > res.gamma_star) {
      res.gamma_star = o.gamma->second;
      res.argmax_x = o.gamma->first;
    }
    if (o.eta && o.eta->second < res.eta_star) {
      res.eta_star = o.eta->second;
      res.argmin_x = o.eta->first;
    }
    if (o.gamma || o.eta) ++res.starts_used;
    if (cfg.record_trace) {
      StartTrace t;
      t.kind = starts[k].kind;
      t.start = starts[k].x;
      if (o.gamma) {
        t.gamma_x = o.gamma->first;
        t.gamma = o.gamma->second;
      }
      if (o.eta) {
        t.eta_x = o.eta->first;
        t.eta = o.eta->second;
      }
      t.iterations = o.iterations;
      res.trace.push_back(std::move(t));
    }
  }

  // Lattice audit at audit_factor times the training resolution.
  if (cfg.audit_factor > 0) {
    const int base = training_grid >= 2 ? training_grid : 30;
    const int n_g = cfg.audit_factor * (base - 1) + 1;
    const std::uint64_t total = lattice_size(roi.dim(), n_g);
    res.audit_points = static_cast<std::size_t>(total);
    struct Local {
      double g = -kInf, e = kInf;
      std::uint64_t gi = 0, ei = 0;
    };
    const std::size_t chunk = 4096;
    const std::size_t nchunks = static_cast<std::size_t>((total + chunk - 1) / chunk);
    std::vector<Local> locals(nchunks);
    parallel_for(
        nchunks,
        [&](std::size_t c) {
          verifier_detail::Evaluator ev(sys, cand);
          Vec x(static_cast<std::size_t>(roi.dim()));
          Local l;
          const std::uint64_t end = std::min<std::uint64_t>(total, (c + 1) * chunk);
          for (std::uint64_t i = c * chunk; i < end; ++i) {
            lattice_point(roi, n_g, i, x);
            if (verifier_detail::norm(x) < r0) continue;
            const auto e = ev(x);
            if (!(e.V <= 1.0) || !in_component(x)) continue;
            if (e.Vdot > l.g) {
              l.g = e.Vdot;
              l.gi = i;
            }
            if (e.V < l.e) {
              l.e = e.V;
              l.ei = i;
            }
          }
          locals[c] = l;
        },
        1);
    Vec x(static_cast<std::size_t>(roi.dim()));
    for (const auto& l : locals) {
      if (l.g > res.gamma_star) {
        res.gamma_star = l.g;
        lattice_point(roi, n_g, l.gi, x);
        res.argmax_x = x;
        res.audit_changed = true;
      }
      if (l.e < res.eta_star) {
        res.eta_star = l.e;
        lattice_point(roi, n_g, l.ei, x);
        res.argmin_x = x;
        // A smaller but positive V on the lattice is not a violation.
        if (l.e <= 0.0) res.audit_changed = true;
      }
    }
  }

  res.degenerate = res.argmax_x.empty() && res.argmin_x.empty();
  res.verified = !res.degenerate && res.gamma_star < 0.0 && res.eta_star > 0.0;
  return res;
}

inline nlohmann::json to_json(const VerifierConfig& c) {
  return {{"n_starts", c.n_starts},       {"r0", c.r0},
          {"fd_step", c.fd_step},         {"max_inner_iters", c.max_inner_iters},
          {"local_tol", c.local_tol},     {"feas_tol", c.feas_tol},
          {"seed", c.seed},               {"audit_factor", c.audit_factor},
          {"intersect_roi", c.intersect_roi},   {"origin_component", c.origin_component},
          {"component_nodes", c.component_nodes}};
}

inline nlohmann::json to_json(const VerifierResult& r) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json j = {{"gamma_star", num(r.gamma_star)},
                      {"eta_star", num(r.eta_star)},
                      {"argmax_x", r.argmax_x},
                      {"argmin_x", r.argmin_x},
                      {"verified", r.verified},
                      {"degenerate", r.degenerate},
                      {"starts_used", r.starts_used},
                      {"audit_points", r.audit_points},
                      {"audit_changed", r.audit_changed}};
  if (!r.trace.empty()) {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& s : r.trace)
      t.push_back({{"kind", s.kind},
                   {"start", s.start},
                   {"gamma_x", s.gamma_x},
                   {"gamma", s.gamma},
                   {"eta_x", s.eta_x},
                   {"eta", s.eta},
                   {"iterations", s.iterations}});
    j["trace"] = std::move(t);
  }
  return j;
}

}  // namespace lyapdoa
