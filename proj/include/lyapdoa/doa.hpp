#pragma once

// Sampling-based DOA estimation: the learner/verifier loop, volume estimates,
// the simulation audit of a verified level set and 2-D contour export.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyapdoa/admm.hpp"
#include "lyapdoa/benchmarks.hpp"
#include "lyapdoa/component.hpp"
#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/error.hpp"
#include "lyapdoa/learner.hpp"
#include "lyapdoa/log.hpp"
#include "lyapdoa/parallel.hpp"
#include "lyapdoa/sampling.hpp"
#include "lyapdoa/verifier.hpp"

namespace lyapdoa {

struct RunConfig {
  std::string system;  // builtin name or right-hand-side source ("x2; -x1")
  expr::ParameterMap parameters;
  Roi roi;
  int grid = 30;  // points per axis
  int d = 1;
  LearnerConfig learner;
  int i_max = 50;
  SimConfig sim;
  VerifierConfig verifier;
  std::optional<AdmmConfig> admm;  // set: the learner LP is solved by consensus ADMM
  std::uint64_t volume_samples = 1'000'000;
  int true_grid = -1;       // dense grid for the true DOA; -1: 100 (2-D), 31 (3-D), off above; 0: off
  int audit_samples = 1000;  // 0 disables the simulation audit
  double dedup_tol = 1e-9;
  std::uint64_t seed = 1;

  void validate() const {
    if (system.empty()) throw ConfigError("system must be set");
    roi.validate();
    if (grid < 2) throw ConfigError("grid.points_per_dim must be >= 2");
    if (d < 1) throw ConfigError("lift.d must be >= 1");
    learner.validate();
    if (i_max < 1) throw ConfigError("loop.i_max must be >= 1");
    sim.validate();
    verifier.validate();
    if (admm) admm->validate();
    if (volume_samples < 10'000) throw ConfigError("volume.samples must be >= 10000");
    if (true_grid < -1 || true_grid == 1) throw ConfigError("true_volume.grid must be -1, 0 or >= 2");
    if (audit_samples < 0) throw ConfigError("audit.samples must be >= 0");
    if (!(dedup_tol >= 0.0)) throw ConfigError("loop.dedup_tol must be >= 0");
  }

  [[nodiscard]] int resolved_true_grid() const {
    if (true_grid >= 0) return true_grid;
    switch (roi.dim()) {
      case 1: return 1000;
      case 2: return 100;
      case 3: return 31;
      default: return 0;
    }
  }
};

/// Overwrites the settings a benchmark row prescribes; everything else in
/// `c` is kept.
inline void apply_row(RunConfig& c, const BenchmarkRow& row) {
  c.system = row.system;
  c.roi = row.roi;
  c.grid = row.grid;
  c.d = row.d;
  c.learner.epsilon = row.epsilon;
  c.learner.delta = row.delta;
  if (row.admm_blocks > 1) {
    if (!c.admm) c.admm.emplace();
    c.admm->m = row.admm_blocks;
  }
}

/// Builtin name if it is one, otherwise the source is parsed with n = dim(ROI).
inline DynamicalSystem resolve_system(const std::string& system, int n, const expr::ParameterMap& params = {}) {
  for (const auto& name : builtin_names())
    if (name == system) {
      auto sys = builtin(name);
      if (sys.dim() != n)
        throw ConfigError("system " + name + " has dimension " + std::to_string(sys.dim()) + " but the ROI has " +
                          std::to_string(n));
      return sys;
    }
  return parse_system(system, n, params);
}

// ---------------------------------------------------------------------------
// Volumes

struct VolumeEstimate {
  double volume = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t hits = 0;
};

namespace doa_detail {

inline constexpr std::uint64_t kChunk = 1 << 14;

// Uniform ROI points in fixed-size chunks, each with its own seeded stream,
// so the outcome does not depend on the worker count.
template <class Body>
void for_uniform_points(const Roi& roi, std::uint64_t count, std::uint64_t seed, Body&& body) {
  const std::uint64_t chunks = (count + kChunk - 1) / kChunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vec x(roi.lower.size());
        const std::uint64_t begin = c * kChunk, end = std::min(count, begin + kChunk);
        for (std::uint64_t k = begin; k < end; ++k) {
          for (std::size_t i = 0; i < x.size(); ++i) x[i] = roi.lower[i] + (roi.upper[i] - roi.lower[i]) * u(rng);
          body(c, k, x);
        }
      },
      1);
}

}  // namespace doa_detail

/// Monte Carlo measure of {V <= 1} ∩ ROI (restricted to `component` if given).
inline VolumeEstimate volume(const DynamicalSystem& sys, const LyapunovCandidate& cand, const Roi& roi,
                             std::uint64_t samples, std::uint64_t seed, const SublevelComponent* component = nullptr) {
  roi.validate();
  if (samples < 10'000) throw ConfigError("volume: at least 10000 samples are required");
  const std::uint64_t chunks = (samples + doa_detail::kChunk - 1) / doa_detail::kChunk;
  std::vector<std::uint64_t> hits(chunks, 0);
  doa_detail::for_uniform_points(roi, samples, seed, [&](std::size_t c, std::uint64_t, const Vec& x) {
    if (eval_V(sys, cand, x) <= 1.0 && (!component || component->touches(x))) ++hits[c];
  });
  VolumeEstimate out;
  out.samples = samples;
  for (auto h : hits) out.hits += h;
  const double q = static_cast<double>(out.hits) / static_cast<double>(samples);
  out.volume = roi.volume() * q;
  out.std_error = roi.volume() * std::sqrt(q * (1.0 - q) / static_cast<double>(samples));
  return out;
}

/// Fraction of stable points of a dense grid times the ROI volume.
inline double true_doa_volume(const DynamicalSystem& sys, const Roi& roi, int n_g, const SimConfig& cfg) {
  const auto set = build_dataset(sys, roi, n_g, cfg);
  return roi.volume() * static_cast<double>(set.count(Stability::Stable)) / static_cast<double>(set.size());
}

// ---------------------------------------------------------------------------
// Audit

struct AuditResult {
  std::size_t samples = 0;    // points of the level set that were simulated
  std::size_t converged = 0;
  std::uint64_t draws = 0;    // uniform ROI draws needed to find them
  double pass_rate = 0.0;
  std::vector<Vec> failures;  // at most 20 kept
};

/// Simulates `count` uniform points of {V <= 1} ∩ ROI and reports the share
/// that converges. Draws stop after 1000 * count attempts.
inline AuditResult soundness_audit(const DynamicalSystem& sys, const LyapunovCandidate& cand, const Roi& roi,
                                   int count, const SimConfig& sim, std::uint64_t seed,
                                   const SublevelComponent* component = nullptr) {
  AuditResult out;
  if (count <= 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec> pts;
  const std::uint64_t max_draws = 1000ull * static_cast<std::uint64_t>(count);
  Vec x(roi.lower.size());
  while (pts.size() < static_cast<std::size_t>(count) && out.draws < max_draws) {
    ++out.draws;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = roi.lower[i] + (roi.upper[i] - roi.lower[i]) * u(rng);
    if (eval_V(sys, cand, x) <= 1.0 && (!component || component->touches(x))) pts.push_back(x);
  }
  std::vector<char> ok(pts.size(), 0);
  parallel_for(pts.size(), [&](std::size_t i) { ok[i] = classify(sys, pts[i], roi, sim) == Stability::Stable; }, 4);
  out.samples = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (ok[i]) ++out.converged;
    else if (out.failures.size() < 20) out.failures.push_back(pts[i]);
  }
  out.pass_rate = out.samples ? static_cast<double>(out.converged) / static_cast<double>(out.samples) : 0.0;
  return out;
}

/// Share of unstable samples with V >= 1 + delta - tol.
inline double unstable_margin_rate(const DynamicalSystem& sys, const LyapunovCandidate& cand,
                                   const std::vector<Vec>& unstable, double delta, double tol = 1e-6) {
  if (unstable.empty()) return 1.0;
  std::vector<char> ok(unstable.size(), 0);
  parallel_for(unstable.size(), [&](std::size_t i) { ok[i] = eval_V(sys, cand, unstable[i]) >= 1.0 + delta - tol; });
  std::size_t k = 0;
  for (char c : ok) k += c != 0;
  return static_cast<double>(k) / static_cast<double>(unstable.size());
}

// ---------------------------------------------------------------------------
// Contours

struct SlicePlane {
  int axis_a = 0;
  int axis_b = 1;
  Vec fixed;  // full-length point; entries on the two free axes are ignored
};

using Polyline = std::vector<std::pair<double, double>>;

/// Marching squares on {V = 1} over a res x res grid of the slice; segments
/// are chained into polylines (closed ones repeat their first point).
inline std::vector<Polyline> export_contour(const DynamicalSystem& sys, const LyapunovCandidate& cand, const Roi& roi,
                                            const SlicePlane& plane, int res) {
  const int n = roi.dim();
  if (plane.axis_a < 0 || plane.axis_b < 0 || plane.axis_a >= n || plane.axis_b >= n || plane.axis_a == plane.axis_b)
    throw ConfigError("contour: free axes must be two distinct axes of the ROI");
  if (res < 2) throw ConfigError("contour: resolution must be >= 2");
  Vec base = plane.fixed.empty() ? Vec(static_cast<std::size_t>(n), 0.0) : plane.fixed;
  if (static_cast<int>(base.size()) != n) throw ConfigError("contour: fixed point has the wrong dimension");
  const auto A = static_cast<std::size_t>(plane.axis_a), B = static_cast<std::size_t>(plane.axis_b);
  auto coord = [&](std::size_t axis, int k) { return lattice_coord(roi.lower[axis], roi.upper[axis], k, res); };

  const auto R = static_cast<std::size_t>(res);
  std::vector<double> F(R * R);
  parallel_for(R * R, [&](std::size_t idx) {
    Vec x = base;
    x[A] = coord(A, static_cast<int>(idx / R));
    x[B] = coord(B, static_cast<int>(idx % R));
    F[idx] = eval_V(sys, cand, x) - 1.0;
  });
  auto f = [&](int i, int j) { return F[static_cast<std::size_t>(i) * R + static_cast<std::size_t>(j)]; };

  // Edge ids: horizontal (i,j)-(i+1,j) -> 2 (i R + j); vertical (i,j)-(i,j+1) -> 2 (i R + j) + 1.
  auto hedge = [&](int i, int j) { return 2 * (static_cast<std::int64_t>(i) * res + j); };
  auto vedge = [&](int i, int j) { return 2 * (static_cast<std::int64_t>(i) * res + j) + 1; };
  std::map<std::int64_t, std::pair<double, double>> point;
  auto cross = [&](std::int64_t id, int i0, int j0, int i1, int j1) {
    if (point.count(id)) return;
    const double f0 = f(i0, j0), f1 = f(i1, j1);
    const double t = f0 / (f0 - f1);
    const double a0 = coord(A, i0), a1 = coord(A, i1), b0 = coord(B, j0), b1 = coord(B, j1);
    point[id] = {a0 + t * (a1 - a0), b0 + t * (b1 - b0)};
  };
  std::vector<std::pair<std::int64_t, std::int64_t>> segs;
  for (int i = 0; i + 1 < res; ++i)
    for (int j = 0; j + 1 < res; ++j) {
      // Corners counter-clockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1); edges between them.
      const bool in[4] = {f(i, j) <= 0, f(i + 1, j) <= 0, f(i + 1, j + 1) <= 0, f(i, j + 1) <= 0};
      const std::int64_t e[4] = {hedge(i, j), vedge(i + 1, j), hedge(i, j + 1), vedge(i, j)};
      const int ends[4][4] = {{i, j, i + 1, j}, {i + 1, j, i + 1, j + 1}, {i, j + 1, i + 1, j + 1}, {i, j, i, j + 1}};
      std::vector<int> cut;
      for (int k = 0; k < 4; ++k)
        if (in[k] != in[(k + 1) % 4]) cut.push_back(k);
      for (int k : cut) cross(e[k], ends[k][0], ends[k][1], ends[k][2], ends[k][3]);
      if (cut.size() == 2) {
        segs.emplace_back(e[cut[0]], e[cut[1]]);
      } else if (cut.size() == 4) {
        // Saddle: the centre value decides which corners connect.
        const double centre = 0.25 * (f(i, j) + f(i + 1, j) + f(i + 1, j + 1) + f(i, j + 1));
        const bool join = (centre <= 0) == in[0];
        if (join) {
          segs.emplace_back(e[3], e[2]);
          segs.emplace_back(e[0], e[1]);
        } else {
          segs.emplace_back(e[3], e[0]);
          segs.emplace_back(e[1], e[2]);
        }
      }
    }

  std::map<std::int64_t, std::vector<std::size_t>> at;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    at[segs[s].first].push_back(s);
    at[segs[s].second].push_back(s);
  }
  std::vector<char> used(segs.size(), 0);
  std::vector<Polyline> lines;
  auto walk = [&](std::size_t s0, std::int64_t from) {
    std::vector<std::int64_t> ids{from};
    std::size_t s = s0;
    std::int64_t cur = from;
    for (;;) {
      used[s] = 1;
      cur = segs[s].first == cur ? segs[s].second : segs[s].first;
      ids.push_back(cur);
      std::optional<std::size_t> next;
      for (auto t : at[cur])
        if (!used[t]) next = t;
      if (!next) break;
      s = *next;
    }
    return ids;
  };
  // Open chains start at an end with a single segment; the rest are loops.
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t s = 0; s < segs.size(); ++s) {
      if (used[s]) continue;
      std::int64_t start = segs[s].first;
      if (pass == 0) {
        if (at[segs[s].first].size() == 1) start = segs[s].first;
        else if (at[segs[s].second].size() == 1) start = segs[s].second;
        else continue;
      }
      Polyline line;
      for (auto id : walk(s, start)) line.push_back(point.at(id));
      lines.push_back(std::move(line));
    }
  if (lines.empty()) log(LogLevel::Warn, "contour: the level set {V = 1} does not cross this slice");
  return lines;
}

inline void write_contour_csv(std::ostream& os, const std::vector<Polyline>& lines, const SlicePlane& plane) {
  os << "polyline,x" << plane.axis_a + 1 << ",x" << plane.axis_b + 1 << "\n";
  os.precision(17);
  for (std::size_t k = 0; k < lines.size(); ++k)
    for (const auto& [a, b] : lines[k]) os << k << "," << a << "," << b << "\n";
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const RunConfig& c) {
  VerifierConfig v = c.verifier;
  v.seed = c.seed;
  nlohmann::json j = {{"system", c.system},
                      {"roi", to_json(c.roi)},
                      {"grid", c.grid},
                      {"d", c.d},
                      {"learner", to_json(c.learner)},
                      {"i_max", c.i_max},
                      {"sim", to_json(c.sim)},
                      {"verifier", to_json(v)},
                      {"volume_samples", c.volume_samples},
                      {"true_grid", c.true_grid},
                      {"audit_samples", c.audit_samples},
                      {"dedup_tol", c.dedup_tol},
                      {"seed", c.seed}};
  if (!c.parameters.empty()) j["parameters"] = c.parameters;
  j["admm"] = c.admm ? to_json(*c.admm) : nlohmann::json();
  return j;
}

/// Timing fields are left out when `timings` is false, which makes reports of
/// identical runs byte-identical.
// ---------------------------------------------------------------------------
// Algorithm loop

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  std::size_t stable_samples = 0;  // including counterexamples so far
  std::size_t level_set_hits = 0;
  double gamma_star = 0.0;
  double eta_star = 0.0;
  bool verified = false;
  std::optional<Vec> counterexample;
  std::string solver_message;
  int admm_iterations = 0;
  double learn_seconds = 0.0;
  double verify_seconds = 0.0;
};

struct StageTimes {
  double sampling = 0.0;
  double learning = 0.0;
  double verification = 0.0;
  double volume = 0.0;
  double true_volume = 0.0;
  double audit = 0.0;
  double total = 0.0;
};

struct RunReport {
  bool verified = false;
  std::optional<LyapunovCandidate> candidate;
  std::string failure;  // why no candidate was returned
  int iterations = 0;
  std::vector<IterationRecord> history;
  std::size_t stable_samples = 0;
  std::size_t unstable_samples = 0;
  std::string dataset_hash;
  std::optional<VolumeEstimate> estimated_volume;
  std::optional<double> true_volume;
  int true_grid = 0;
  std::optional<AuditResult> audit;
  std::optional<double> unstable_margin_rate;
  std::size_t component_nodes = 0;
  StageTimes times;
  nlohmann::json config;  // echo of the RunConfig
  std::string system_hash;
};

namespace doa_detail {

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

inline double dist_inf(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace doa_detail

/// One learner solve: the direct IPM, or consensus ADMM when `admm` is given.
/// A consensus run stopped at max_iters still yields a candidate (the
/// verifier judges it); only an infeasible LP is an error.
inline LearnResult learn_candidate(const LearnerData& data, const LearnerConfig& cfg, const AdmmBackend* admm) {
  if (!admm) return learn(data, cfg);
  const LinearProgram lp = assemble(data, cfg);
  const SolveResult s = admm->solve(lp, cfg.tol);
  if (s.status == SolveStatus::Infeasible) throw Error("learner LP is infeasible: " + s.message);
  if (s.status != SolveStatus::Optimal) log(LogLevel::Warn, "ADMM: " + s.message);
  LearnResult lr;
  lr.solve = s;
  lr.candidate = candidate_from_solution(data, s.x);
  lr.level_set_hits = level_set_hits(lr.candidate, cfg.alpha_zero_tol);
  return lr;
}

/// Stable samples (counterexamples included) whose slack is zero: the sample
/// starts of the verifier.
inline std::vector<Vec> zero_alpha_samples(const LearnerData& data, const LyapunovCandidate& cand, double tol) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < data.stable.size(); ++i)
    if (cand.alpha[static_cast<Eigen::Index>(i)] <= tol) out.push_back(data.stable[i].x);
  return out;
}

/// Runs the loop on a prepared dataset. The dataset is the initial one; the
/// loop adds counterexamples to the stable set.
inline RunReport run_on_dataset(const DynamicalSystem& sys, const SampleSet& set, const RunConfig& cfg) {
  using doa_detail::seconds_since;
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  RunReport rep;
  rep.config = to_json(cfg);
  rep.system_hash = hex64(sys.hash());
  rep.dataset_hash = dataset_hash(set);
  rep.stable_samples = set.count(Stability::Stable);
  rep.unstable_samples = set.count(Stability::Unstable);
  if (rep.stable_samples == 0) throw Error("no stable samples in the dataset; enlarge the ROI or refine the grid");

  std::vector<Vec> ces, routed_unstable;
  std::optional<AdmmBackend> admm;
  if (cfg.admm && cfg.admm->m > 1) admm.emplace(*cfg.admm);
  VerifierConfig vcfg = cfg.verifier;
  vcfg.seed = cfg.seed;  // one seed drives every random stream

  for (int it = 1; it <= cfg.i_max; ++it) {
    IterationRecord rec;
    rec.iter = it;
    auto t = std::chrono::steady_clock::now();
    LearnerData data = lift_dataset(sys, set, cfg.d, ces);
    if (!routed_unstable.empty()) {
      auto extra = lift_all(sys, routed_unstable, cfg.d, SampleLabel::Unstable);
      data.unstable.insert(data.unstable.end(), extra.begin(), extra.end());
    }
    // A failure in the first round is an error; later it ends the loop and
    // the history so far is still reported.
    LearnResult lr;
    try {
      lr = learn_candidate(data, cfg.learner, admm ? &*admm : nullptr);
    } catch (const Error& e) {
      if (it == 1) throw;
      rep.failure = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    if (admm) rec.admm_iterations = admm->last().state.iter;
    rec.learn_seconds = seconds_since(t);
    rep.times.learning += rec.learn_seconds;
    rec.objective = lr.candidate.objective;
    rec.stable_samples = data.stable.size();
    rec.level_set_hits = lr.level_set_hits;
    rec.solver_message = lr.solve.message;

    t = std::chrono::steady_clock::now();
    const auto starts = zero_alpha_samples(data, lr.candidate, cfg.learner.alpha_zero_tol);
    const VerifierResult v = verify(sys, lr.candidate, cfg.roi, vcfg, starts, ces, cfg.grid);
    rec.verify_seconds = seconds_since(t);
    rep.times.verification += rec.verify_seconds;
    rec.gamma_star = v.gamma_star;
    rec.eta_star = v.eta_star;
    rec.verified = v.verified;
    rep.iterations = it;
    log(LogLevel::Info, "iteration " + std::to_string(it) + ": objective " + std::to_string(rec.objective) +
                            ", gamma* " + std::to_string(v.gamma_star) + ", eta* " + std::to_string(v.eta_star));

    if (v.verified) {
      rep.history.push_back(std::move(rec));
      rep.verified = true;
      rep.candidate = lr.candidate;
      break;
    }
    const auto ce = counterexample(v);
    if (!ce) {
      rep.history.push_back(std::move(rec));
      rep.failure = "the verifier found no feasible point outside the origin ball";
      break;
    }
    rec.counterexample = *ce;
    rep.history.push_back(rec);
    bool duplicate = false;
    for (const auto& x : set.points) duplicate = duplicate || doa_detail::dist_inf(x, *ce) <= cfg.dedup_tol;
    for (const auto& x : ces) duplicate = duplicate || doa_detail::dist_inf(x, *ce) <= cfg.dedup_tol;
    for (const auto& x : routed_unstable) duplicate = duplicate || doa_detail::dist_inf(x, *ce) <= cfg.dedup_tol;
    if (duplicate) {
      rep.failure = "counterexample repeats an existing sample (within " + format_real(cfg.dedup_tol) + ")";
      break;
    }
    if (cfg.learner.route_counterexamples && classify(sys, *ce, cfg.roi, cfg.sim) == Stability::Unstable)
      routed_unstable.push_back(*ce);
    else
      ces.push_back(*ce);
    if (it == cfg.i_max) rep.failure = "not verified within i_max = " + std::to_string(cfg.i_max) + " iterations";
  }

  if (rep.verified) {
    const LyapunovCandidate& cand = *rep.candidate;
    auto t = std::chrono::steady_clock::now();
    std::optional<SublevelComponent> component;
    if (cfg.verifier.origin_component) {
      component.emplace(sys, cand, cfg.roi, cfg.verifier.component_nodes);
      rep.component_nodes = component->component_nodes();
    }
    const SublevelComponent* comp = component ? &*component : nullptr;
    rep.estimated_volume = volume(sys, cand, cfg.roi, cfg.volume_samples, cfg.seed, comp);
    rep.times.volume = seconds_since(t);

    t = std::chrono::steady_clock::now();
    rep.unstable_margin_rate = unstable_margin_rate(sys, cand, set.unstable(), cfg.learner.delta);
    if (cfg.audit_samples > 0)
      rep.audit = soundness_audit(sys, cand, cfg.roi, cfg.audit_samples, cfg.sim, cfg.seed + 1, comp);
    rep.times.audit = seconds_since(t);
  }
  rep.true_grid = cfg.resolved_true_grid();
  if (rep.true_grid >= 2) {
    const auto t = std::chrono::steady_clock::now();
    rep.true_volume = true_doa_volume(sys, cfg.roi, rep.true_grid, cfg.sim);
    rep.times.true_volume = seconds_since(t);
  }
  rep.times.total = seconds_since(t_start);
  return rep;
}

inline RunReport run(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const DynamicalSystem sys = resolve_system(cfg.system, cfg.roi.dim(), cfg.parameters);
  sys.require_equilibrium_at_origin();
  const SampleSet set = build_dataset(sys, cfg.roi, cfg.grid, cfg.sim);
  const double sampling = doa_detail::seconds_since(t0);
  RunReport rep = run_on_dataset(sys, set, cfg);
  rep.times.sampling = sampling;
  rep.times.total += sampling;
  return rep;
}

inline nlohmann::json to_json(const RunReport& r, bool timings = true) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : r.history) {
    nlohmann::json e = {{"iter", h.iter},
                        {"objective", h.objective},
                        {"stable_samples", h.stable_samples},
                        {"level_set_hits", h.level_set_hits},
                        {"gamma_star", num(h.gamma_star)},
                        {"eta_star", num(h.eta_star)},
                        {"verified", h.verified},
                        {"counterexample", h.counterexample ? nlohmann::json(*h.counterexample) : nlohmann::json()},
                        {"solver_message", h.solver_message},
                        {"admm_iterations", h.admm_iterations}};
    if (timings) {
      e["learn_seconds"] = h.learn_seconds;
      e["verify_seconds"] = h.verify_seconds;
    }
    hist.push_back(std::move(e));
  }
  nlohmann::json j = {{"verified", r.verified},
                      {"iterations", r.iterations},
                      {"failure", r.failure},
                      {"history", std::move(hist)},
                      {"dataset", {{"stable", r.stable_samples}, {"unstable", r.unstable_samples}, {"hash", r.dataset_hash}}}};
  if (r.candidate) {
    j["candidate"] = {{"n", r.candidate->n},
                      {"d", r.candidate->d},
                      {"p", r.candidate->p()},
                      {"P_upper", r.candidate->upper()},
                      {"objective", r.candidate->objective}};
  } else {
    j["candidate"] = nullptr;
  }
  if (r.estimated_volume)
    j["estimated_volume"] = {{"volume", r.estimated_volume->volume},
                             {"std_error", r.estimated_volume->std_error},
                             {"samples", r.estimated_volume->samples},
                             {"hits", r.estimated_volume->hits},
                             {"component_nodes", r.component_nodes}};
  if (r.true_volume) j["true_volume"] = {{"volume", *r.true_volume}, {"grid", r.true_grid}};
  if (r.audit) {
    nlohmann::json fails = nlohmann::json::array();
    for (const auto& x : r.audit->failures) fails.push_back(x);
    j["audit"] = {{"samples", r.audit->samples},
                  {"converged", r.audit->converged},
                  {"draws", r.audit->draws},
                  {"pass_rate", r.audit->pass_rate},
                  {"failures", std::move(fails)}};
  }
  if (r.unstable_margin_rate) j["unstable_margin_rate"] = *r.unstable_margin_rate;
  j["config"] = r.config;
  j["system_hash"] = r.system_hash;
  if (timings)
    j["times"] = {{"sampling", r.times.sampling},       {"learning", r.times.learning},
                  {"verification", r.times.verification}, {"volume", r.times.volume},
                  {"true_volume", r.times.true_volume},   {"audit", r.times.audit},
                  {"total", r.times.total}};
  return j;
}

}  // namespace lyapdoa
