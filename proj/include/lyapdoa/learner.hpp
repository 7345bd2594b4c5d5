#pragma once

// The l1 learner: a lifted quadratic V = z'Pz separating stable samples
// (inside the 1 level set, decreasing) from unstable ones (above 1 + delta).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/error.hpp"
#include "lyapdoa/lp.hpp"
#include "lyapdoa/parallel.hpp"
#include "lyapdoa/sampling.hpp"

namespace lyapdoa {

struct LyapunovCandidate {
  int n = 0;
  int d = 1;
  Eigen::MatrixXd P;  // symmetric p x p, p = n (d + 1)
  Eigen::VectorXd alpha;
  double objective = 0.0;

  [[nodiscard]] int p() const noexcept { return n * (d + 1); }

  /// Upper triangle of P, row-major.
  [[nodiscard]] std::vector<double> upper() const {
    std::vector<double> u;
    for (Eigen::Index a = 0; a < P.rows(); ++a)
      for (Eigen::Index b = a; b < P.cols(); ++b) u.push_back(P(a, b));
    return u;
  }

  static LyapunovCandidate from_upper(int n, int d, const std::vector<double>& u) {
    LyapunovCandidate c;
    c.n = n;
    c.d = d;
    const int p = n * (d + 1);
    if (static_cast<int>(u.size()) != p * (p + 1) / 2)
      throw ConfigError("candidate: expected " + std::to_string(p * (p + 1) / 2) + " upper-triangle entries, got " +
                        std::to_string(u.size()));
    c.P.resize(p, p);
    std::size_t k = 0;
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) c.P(a, b) = c.P(b, a) = u[k++];
    return c;
  }
};

inline double eval_V(const LyapunovCandidate& c, const LiftedSample& s) {
  const Eigen::Map<const Eigen::VectorXd> z(s.z.data(), static_cast<Eigen::Index>(s.z.size()));
  if (z.size() != c.P.rows()) throw ConfigError("eval_V: lifted sample has wrong length");
  return z.dot(c.P * z);
}

inline double eval_Vdot(const LyapunovCandidate& c, const LiftedSample& s) {
  const Eigen::Map<const Eigen::VectorXd> z(s.z.data(), static_cast<Eigen::Index>(s.z.size()));
  const Eigen::Map<const Eigen::VectorXd> zd(s.zdot.data(), static_cast<Eigen::Index>(s.zdot.size()));
  if (z.size() != c.P.rows() || zd.size() != c.P.rows()) throw ConfigError("eval_Vdot: lifted sample has wrong length");
  return 2.0 * zd.dot(c.P * z);
}

/// V and its derivative along the flow at a raw state.
inline double eval_V(const DynamicalSystem& sys, const LyapunovCandidate& c, std::span<const double> x) {
  return eval_V(c, lift(sys, x, c.d));
}
inline double eval_Vdot(const DynamicalSystem& sys, const LyapunovCandidate& c, std::span<const double> x) {
  return eval_Vdot(c, lift(sys, x, c.d));
}

struct LearnerConfig {
  double epsilon = 1e-3;
  double delta = 0.1;
  double alpha_zero_tol = 1e-6;
  // Off by default: counterexamples join the stable set.
  bool route_counterexamples = false;
  SolverTolerances tol{};

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("learner.epsilon must be > 0");
    if (!(delta > 0.0)) throw ConfigError("learner.delta must be > 0");
    if (!(alpha_zero_tol >= 0.0)) throw ConfigError("learner.alpha_zero_tol must be >= 0");
  }
};

/// Lifted training data; counterexamples are stored with the stable samples.
struct LearnerData {
  int n = 0;
  int d = 1;
  std::vector<LiftedSample> stable;
  std::vector<LiftedSample> unstable;
};

inline std::vector<LiftedSample> lift_all(const DynamicalSystem& sys, const std::vector<Vec>& xs, int d,
                                          SampleLabel label) {
  std::vector<LiftedSample> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { out[i] = lift(sys, xs[i], d, label); });
  return out;
}

inline LearnerData lift_dataset(const DynamicalSystem& sys, const SampleSet& set, int d,
                                const std::vector<Vec>& counterexamples = {}) {
  LearnerData data;
  data.n = sys.dim();
  data.d = d;
  data.stable = lift_all(sys, set.stable(), d, SampleLabel::Stable);
  auto ce = lift_all(sys, counterexamples, d, SampleLabel::Counterexample);
  data.stable.insert(data.stable.end(), ce.begin(), ce.end());
  data.unstable = lift_all(sys, set.unstable(), d, SampleLabel::Unstable);
  return data;
}

namespace learner_detail {

// Coefficients of V and Vdot in the packed upper triangle of P.
inline void features(const LiftedSample& s, int p, std::vector<double>& fv, std::vector<double>& fvd) {
  fv.assign(static_cast<std::size_t>(p * (p + 1) / 2), 0.0);
  fvd.assign(fv.size(), 0.0);
  std::size_t k = 0;
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b, ++k) {
      if (a == b) {
        fv[k] = s.z[a] * s.z[a];
        fvd[k] = 2.0 * s.zdot[a] * s.z[a];
      } else {
        fv[k] = 2.0 * s.z[a] * s.z[b];
        fvd[k] = 2.0 * (s.zdot[a] * s.z[b] + s.z[a] * s.zdot[b]);
      }
    }
}

inline double sqnorm(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace learner_detail

/// Layout of the learner LP.
///
/// Variables: [packed P (p(p+1)/2), alpha (N0)], alpha >= 0 as bounds.
/// Rows, in order: per stable sample i the pair
///   V(x_i) - alpha_i <= 1,   Vdot(x_i) - alpha_i <= -eps |x_i|^2     (divisible)
/// then -V(x_i) <= -eps |x_i|^2 for every stable sample, then
/// -V(x_j) <= -(1 + delta) for every unstable sample (shared).
inline LinearProgram assemble(const LearnerData& data, const LearnerConfig& cfg) {
  cfg.validate();
  const int p = data.n * (data.d + 1);
  const auto T = static_cast<Eigen::Index>(p * (p + 1) / 2);
  const auto N0 = static_cast<Eigen::Index>(data.stable.size());
  const auto Ninf = static_cast<Eigen::Index>(data.unstable.size());
  if (N0 < 1) throw ConfigError("no stable samples: the learner needs at least one point in the stable set");
  const Eigen::Index rows = 3 * N0 + Ninf;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>((2 * T + 1) * 3 * N0 + T * Ninf));
  Eigen::VectorXd b(rows);
  std::vector<std::uint8_t> divisible(static_cast<std::size_t>(rows), 0);
  std::vector<double> fv, fvd;
  auto put = [&](Eigen::Index row, const std::vector<double>& f, double sign) {
    for (Eigen::Index k = 0; k < T; ++k)
      if (f[static_cast<std::size_t>(k)] != 0.0) trip.emplace_back(row, k, sign * f[static_cast<std::size_t>(k)]);
  };
  for (Eigen::Index i = 0; i < N0; ++i) {
    const auto& s = data.stable[static_cast<std::size_t>(i)];
    learner_detail::features(s, p, fv, fvd);
    const double margin = cfg.epsilon * learner_detail::sqnorm(s.x);
    const Eigen::Index r_level = 2 * i, r_decr = 2 * i + 1, r_pos = 2 * N0 + i;
    put(r_level, fv, 1.0);
    trip.emplace_back(r_level, T + i, -1.0);
    b[r_level] = 1.0;
    put(r_decr, fvd, 1.0);
    trip.emplace_back(r_decr, T + i, -1.0);
    b[r_decr] = -margin;
    put(r_pos, fv, -1.0);
    b[r_pos] = -margin;
    divisible[static_cast<std::size_t>(r_level)] = divisible[static_cast<std::size_t>(r_decr)] = 1;
  }
  for (Eigen::Index j = 0; j < Ninf; ++j) {
    learner_detail::features(data.unstable[static_cast<std::size_t>(j)], p, fv, fvd);
    put(3 * N0 + j, fv, -1.0);
    b[3 * N0 + j] = -(1.0 + cfg.delta);
  }
  SparseRowMatrix A(rows, T + N0);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();

  Eigen::VectorXd c = Eigen::VectorXd::Zero(T + N0);
  c.tail(N0).setOnes();
  LinearProgram lp = make_lp(std::move(c), std::move(A), std::move(b));
  lp.lower.tail(N0).setZero();
  lp.divisible = std::move(divisible);
  return lp;
}

/// Unpacks a solution vector of the learner LP.
inline LyapunovCandidate candidate_from_solution(const LearnerData& data, const Eigen::VectorXd& xi) {
  const int p = data.n * (data.d + 1);
  const std::size_t T = static_cast<std::size_t>(p * (p + 1) / 2);
  std::vector<double> u(xi.data(), xi.data() + T);
  LyapunovCandidate c = LyapunovCandidate::from_upper(data.n, data.d, u);
  c.alpha = xi.tail(xi.size() - static_cast<Eigen::Index>(T));
  c.objective = c.alpha.sum();
  return c;
}

struct LearnResult {
  LyapunovCandidate candidate;
  std::size_t level_set_hits = 0;  // stable samples with alpha below alpha_zero_tol
  SolveResult solve;
  std::size_t rows = 0;
  std::size_t vars = 0;
};

inline std::size_t level_set_hits(const LyapunovCandidate& c, double tol) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < c.alpha.size(); ++i)
    if (c.alpha[i] <= tol) ++hits;
  return hits;
}

inline LearnResult learn(const LearnerData& data, const LearnerConfig& cfg, const LpBackend& backend) {
  const LinearProgram lp = assemble(data, cfg);
  LearnResult out;
  out.rows = static_cast<std::size_t>(lp.num_rows());
  out.vars = static_cast<std::size_t>(lp.num_vars());
  out.solve = backend.solve(lp, cfg.tol);
  if (out.solve.status == SolveStatus::Infeasible)
    throw Error("learner LP is infeasible (" + std::to_string(out.rows) + " rows); raise the lift order d or "
                "split the constraints with ADMM (admm.m)");
  if (out.solve.status != SolveStatus::Optimal)
    throw Error(std::string("learner LP not solved: ") + to_string(out.solve.status) + ": " + out.solve.message);
  out.candidate = candidate_from_solution(data, out.solve.x);
  out.level_set_hits = level_set_hits(out.candidate, cfg.alpha_zero_tol);
  return out;
}

inline LearnResult learn(const LearnerData& data, const LearnerConfig& cfg) {
  return learn(data, cfg, InteriorPointSolver{});
}

// ---------------------------------------------------------------------------
// Candidate file: {"n", "d", "p", "P_upper": row-major upper triangle, "objective",
// "learner": config echo, "dataset_hash"}.

inline nlohmann::json to_json(const LearnerConfig& c) {
  return {{"epsilon", c.epsilon},
          {"delta", c.delta},
          {"alpha_zero_tol", c.alpha_zero_tol},
          {"route_counterexamples", c.route_counterexamples}};
}

inline LearnerConfig learner_config_from_json(const nlohmann::json& j) {
  LearnerConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.delta = j.value("delta", c.delta);
  c.alpha_zero_tol = j.value("alpha_zero_tol", c.alpha_zero_tol);
  c.route_counterexamples = j.value("route_counterexamples", c.route_counterexamples);
  return c;
}

inline nlohmann::json candidate_json(const LyapunovCandidate& c, const LearnerConfig& cfg,
                                     const std::string& dataset_hash) {
  return {{"n", c.n},
          {"d", c.d},
          {"p", c.p()},
          {"P_upper", c.upper()},
          {"objective", c.objective},
          {"learner", to_json(cfg)},
          {"dataset_hash", dataset_hash}};
}

struct LoadedCandidate {
  LyapunovCandidate candidate;
  LearnerConfig config;
  std::string dataset_hash;
};

inline LoadedCandidate candidate_from_json(const nlohmann::json& j) {
  LoadedCandidate out;
  out.candidate = LyapunovCandidate::from_upper(j.at("n").get<int>(), j.at("d").get<int>(),
                                                j.at("P_upper").get<std::vector<double>>());
  out.candidate.objective = j.value("objective", 0.0);
  if (j.contains("learner")) out.config = learner_config_from_json(j.at("learner"));
  out.dataset_hash = j.value("dataset_hash", std::string());
  return out;
}

inline void save_candidate(const std::string& path, const LyapunovCandidate& c, const LearnerConfig& cfg,
                           const std::string& dataset_hash) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << candidate_json(c, cfg, dataset_hash).dump(2) << "\n";
}

inline LoadedCandidate load_candidate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read candidate " + path);
  return candidate_from_json(nlohmann::json::parse(is));
}

}  // namespace lyapdoa
