#pragma once

// Stage commands behind the command-line tool. Each returns the process exit
// code: 0 success, 2 the loop (or the verifier) returned no certified
// candidate, 1 error. Artifacts go to the output directory together with a
// manifest.json that lists every emitted file with its content hash.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyapdoa/benchmarks.hpp"
#include "lyapdoa/config.hpp"
#include "lyapdoa/doa.hpp"

namespace lyapdoa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotVerified = 2;

struct CommonArgs {
  std::string config;                  // may be empty for commands that can fall back on a dataset sidecar
  std::vector<std::string> overrides;  // "key=value", applied after the file
  std::string out;                     // overrides output.dir
};

struct StageArgs {
  std::string dataset;          // CSV written by `sample`
  std::string candidate;        // JSON written by `learn`
  std::string counterexamples;  // optional CSV x1..xn of extra stable-set points
  int d = 0;                    // 0: from the config
};

class Output {
 public:
  explicit Output(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  [[nodiscard]] std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw Error("cannot write " + path(name).string());
    os << content;
    files_.push_back(name);
  }

  /// Merges this command's files into manifest.json (entries are keyed by name).
  void finish(const std::string& command) const {
    nlohmann::json manifest = {{"files", nlohmann::json::object()}};
    if (std::ifstream is(path("manifest.json")); is) {
      try {
        manifest = nlohmann::json::parse(is);
      } catch (const nlohmann::json::exception&) {
        log(LogLevel::Warn, "manifest.json is unreadable and will be rewritten");
      }
    }
    for (const auto& name : files_) {
      std::ifstream is(path(name), std::ios::binary);
      std::stringstream ss;
      ss << is.rdbuf();
      const std::string bytes = ss.str();
      manifest["files"][name] = {{"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a(bytes))}, {"command", command}};
    }
    std::ofstream os(path("manifest.json"));
    os << manifest.dump(2) << "\n";
  }

  [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline FileConfig load(const CommonArgs& a) {
  FileConfig c = a.config.empty() ? FileConfig{} : load_config(a.config);
  apply_overrides(c, a.overrides);
  return c;
}

inline std::string pretty(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// System and ROI from the config, or else from a dataset sidecar.
inline DynamicalSystem stage_system(FileConfig& c, const nlohmann::json& sidecar) {
  if (c.run.roi.lower.empty() && c.run.roi.upper.empty() && !sidecar.is_null())
    c.run.roi = roi_from_json(sidecar.at("roi"));
  if (c.run.system.empty() && !sidecar.is_null()) {
    const auto& s = sidecar.at("system");
    c.run.system = s.at("name").get<std::string>();
    bool known = false;
    for (const auto& b : builtin_names()) known = known || b == c.run.system;
    if (!known) c.run.system = s.at("source").get<std::string>();
  }
  if (c.run.system.empty()) throw ConfigError("system is not set (config key `system`)");
  c.run.roi.validate();
  auto sys = resolve_system(c.run.system, c.run.roi.dim(), c.run.parameters);
  sys.require_equilibrium_at_origin();
  if (!sidecar.is_null() && sidecar.contains("system") && sidecar["system"].contains("hash") &&
      sidecar["system"]["hash"].get<std::string>() != hex64(sys.hash()))
    log(LogLevel::Warn, "dataset was generated for a different system (hash mismatch)");
  return sys;
}

inline std::vector<Vec> read_points_csv(const std::string& path, int n) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  std::vector<Vec> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    Vec x;
    while (std::getline(ss, cell, ',')) x.push_back(parse_real(cell));
    if (static_cast<int>(x.size()) != n) throw ConfigError(path + ": expected " + std::to_string(n) + " columns");
    out.push_back(std::move(x));
  }
  return out;
}

inline std::string points_csv(const std::vector<Vec>& pts, int n) {
  std::ostringstream os;
  for (int i = 0; i < n; ++i) os << (i ? "," : "") << "x" << i + 1;
  os << "\n";
  for (const auto& x : pts) {
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << format_real(x[i]);
    os << "\n";
  }
  return os.str();
}

inline std::string contour_csv(const DynamicalSystem& sys, const LyapunovCandidate& cand, const FileConfig& c) {
  const SlicePlane plane{c.contour.axis_a, c.contour.axis_b, c.contour.fixed};
  const auto lines = export_contour(sys, cand, c.run.roi, plane, c.contour.resolution);
  std::ostringstream os;
  write_contour_csv(os, lines, plane);
  return os.str();
}

inline std::string dataset_text(const SampleSet& set) {
  std::ostringstream os;
  write_dataset_csv(os, set);
  return os.str();
}

// ---------------------------------------------------------------------------

inline int cmd_run(const CommonArgs& a) {
  FileConfig c = load(a);
  const RunConfig& r = c.run;
  r.validate();
  Output out(resolve_output_dir(c, a.out));
  const auto sys = resolve_system(r.system, r.roi.dim(), r.parameters);
  sys.require_equilibrium_at_origin();
  const auto t0 = std::chrono::steady_clock::now();
  const SampleSet set = build_dataset(sys, r.roi, r.grid, r.sim);
  const double sampling = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunReport rep = run_on_dataset(sys, set, r);
  rep.times.sampling = sampling;
  rep.times.total += sampling;

  out.write("dataset.csv", dataset_text(set));
  out.write("dataset.json", pretty(dataset_sidecar(set, r.sim, sys)));
  if (rep.candidate) {
    out.write("candidate.json", pretty(candidate_json(*rep.candidate, r.learner, rep.dataset_hash)));
    if (r.roi.dim() >= 2) out.write("contour.csv", contour_csv(sys, *rep.candidate, c));
  }
  out.write("config.cfg", to_config_text(c));
  out.write("report.json", pretty(to_json(rep)));
  out.finish("run");

  if (rep.verified) {
    std::cout << "verified after " << rep.iterations << " iteration(s); volume " << rep.estimated_volume->volume
              << " +- " << rep.estimated_volume->std_error;
    if (rep.true_volume) std::cout << " (true DOA " << *rep.true_volume << ")";
    std::cout << "\n";
    return kExitOk;
  }
  std::cout << "no certified candidate: " << rep.failure << "\n";
  return kExitNotVerified;
}

inline int cmd_sample(const CommonArgs& a) {
  FileConfig c = load(a);
  c.run.roi.validate();
  c.run.sim.validate();
  if (c.run.grid < 2) throw ConfigError("grid.points_per_dim must be >= 2");
  Output out(resolve_output_dir(c, a.out));
  const auto sys = resolve_system(c.run.system, c.run.roi.dim(), c.run.parameters);
  sys.require_equilibrium_at_origin();
  const SampleSet set = build_dataset(sys, c.run.roi, c.run.grid, c.run.sim);
  out.write("dataset.csv", dataset_text(set));
  out.write("dataset.json", pretty(dataset_sidecar(set, c.run.sim, sys)));
  out.finish("sample");
  std::cout << set.count(Stability::Stable) << " stable, " << set.count(Stability::Unstable) << " unstable\n";
  return kExitOk;
}

inline int cmd_learn(const CommonArgs& a, const StageArgs& s) {
  if (s.dataset.empty()) throw ConfigError("learn needs --dataset");
  FileConfig c = load(a);
  if (s.d > 0) c.run.d = s.d;
  auto ds = load_dataset(s.dataset);
  const auto sys = stage_system(c, ds.sidecar);
  if (ds.set.roi.lower.empty()) ds.set.roi = c.run.roi;
  if (ds.set.count(Stability::Stable) == 0) throw Error("no stable samples in " + s.dataset);
  c.run.learner.validate();
  if (c.run.d < 1) throw ConfigError("lift.d must be >= 1");
  std::vector<Vec> ces;
  if (!s.counterexamples.empty()) ces = read_points_csv(s.counterexamples, sys.dim());

  Output out(resolve_output_dir(c, a.out));
  const LearnerData data = lift_dataset(sys, ds.set, c.run.d, ces);
  std::optional<AdmmBackend> admm;
  if (c.run.admm && c.run.admm->m > 1) admm.emplace(*c.run.admm);
  const LearnResult lr = learn_candidate(data, c.run.learner, admm ? &*admm : nullptr);
  auto j = candidate_json(lr.candidate, c.run.learner, dataset_hash(ds.set));
  // The verifier starts from the zero-slack samples; keep them with the candidate.
  j["verifier_starts"] = zero_alpha_samples(data, lr.candidate, c.run.learner.alpha_zero_tol);
  j["counterexamples"] = ces;
  j["solver"] = {{"status", to_string(lr.solve.status)}, {"message", lr.solve.message}};
  out.write("candidate.json", pretty(j));
  out.finish("learn");
  std::cout << "objective " << lr.candidate.objective << ", " << lr.level_set_hits << " zero-slack samples\n";
  return kExitOk;
}

struct StageCandidate {
  FileConfig config;
  DynamicalSystem sys;
  LyapunovCandidate candidate;
  nlohmann::json raw;
  int training_grid = 0;
};

inline StageCandidate load_stage_candidate(const CommonArgs& a, const StageArgs& s) {
  if (s.candidate.empty()) throw ConfigError("this command needs --candidate");
  FileConfig c = load(a);
  nlohmann::json sidecar;
  int grid = c.run.grid;
  if (!s.dataset.empty()) {
    auto ds = load_dataset(s.dataset);
    sidecar = ds.sidecar;
    if (ds.set.grid_points_per_dim > 0) grid = ds.set.grid_points_per_dim;
  }
  auto sys = stage_system(c, sidecar);
  std::ifstream is(s.candidate);
  if (!is) throw Error("cannot read candidate " + s.candidate);
  auto raw = nlohmann::json::parse(is);
  auto cand = candidate_from_json(raw).candidate;
  if (cand.n != sys.dim()) throw ConfigError("candidate dimension does not match the system");
  return {std::move(c), std::move(sys), std::move(cand), std::move(raw), grid};
}

inline int cmd_verify(const CommonArgs& a, const StageArgs& s) {
  auto st = load_stage_candidate(a, s);
  st.config.run.verifier.validate();
  VerifierConfig vcfg = st.config.run.verifier;
  vcfg.seed = st.config.run.seed;
  std::vector<Vec> starts, ces;
  if (st.raw.contains("verifier_starts")) starts = st.raw["verifier_starts"].get<std::vector<Vec>>();
  if (st.raw.contains("counterexamples")) ces = st.raw["counterexamples"].get<std::vector<Vec>>();
  const VerifierResult v = verify(st.sys, st.candidate, st.config.run.roi, vcfg, starts, ces, st.training_grid);
  Output out(resolve_output_dir(st.config, a.out));
  auto j = to_json(v);
  if (auto ce = counterexample(v)) {
    j["counterexample"] = *ce;
    out.write("counterexample.csv", points_csv({*ce}, st.sys.dim()));
  }
  out.write("verify.json", pretty(j));
  out.finish("verify");
  std::cout << (v.verified ? "verified" : "not verified") << ": gamma* " << v.gamma_star << ", eta* " << v.eta_star
            << "\n";
  return v.verified ? kExitOk : kExitNotVerified;
}

inline int cmd_volume(const CommonArgs& a, const StageArgs& s) {
  auto st = load_stage_candidate(a, s);
  const RunConfig& r = st.config.run;
  std::optional<SublevelComponent> comp;
  if (r.verifier.origin_component) comp.emplace(st.sys, st.candidate, r.roi, r.verifier.component_nodes);
  const auto v = volume(st.sys, st.candidate, r.roi, r.volume_samples, r.seed, comp ? &*comp : nullptr);
  nlohmann::json j = {{"volume", v.volume}, {"std_error", v.std_error}, {"samples", v.samples}, {"hits", v.hits}};
  const int tg = r.resolved_true_grid();
  if (tg >= 2) j["true_volume"] = {{"volume", true_doa_volume(st.sys, r.roi, tg, r.sim)}, {"grid", tg}};
  Output out(resolve_output_dir(st.config, a.out));
  out.write("volume.json", pretty(j));
  out.finish("volume");
  std::cout << "volume " << v.volume << " +- " << v.std_error << "\n";
  return kExitOk;
}

inline int cmd_export(const CommonArgs& a, const StageArgs& s) {
  auto st = load_stage_candidate(a, s);
  Output out(resolve_output_dir(st.config, a.out));
  out.write("contour.csv", contour_csv(st.sys, st.candidate, st.config));
  out.finish("export");
  std::cout << "wrote " << out.path("contour.csv").string() << "\n";
  return kExitOk;
}

/// Replays benchmark rows with their published settings; `rows` empty: all
/// rows except the slow 5-D one.
inline int cmd_bench(const CommonArgs& a, std::vector<std::string> rows) {
  FileConfig base = load(a);
  if (rows.empty())
    for (const auto& row : benchmark_rows())
      if (row.system != "sys5d") rows.push_back(row.system);
  Output out(resolve_output_dir(base, a.out));
  nlohmann::json all = nlohmann::json::array();
  bool every = true;
  std::cout << std::left << std::setw(8) << "row" << std::right << std::setw(12) << "pub. vol" << std::setw(12)
            << "volume" << std::setw(12) << "pub. true" << std::setw(12) << "true" << std::setw(7) << "iters"
            << std::setw(10) << "seconds" << "\n";
  for (const auto& name : rows) {
    const BenchmarkRow& row = benchmark_row(name);
    FileConfig c = base;
    apply_row(c.run, row);
    apply_overrides(c, a.overrides);
    const RunReport rep = run(c.run);
    every = every && rep.verified;
    const double vol = rep.estimated_volume ? rep.estimated_volume->volume : std::nan("");
    const double tv = rep.true_volume.value_or(std::nan(""));
    std::cout << std::left << std::setw(8) << name << std::right << std::fixed << std::setprecision(2)
              << std::setw(12) << row.estimated_volume << std::setw(12) << vol << std::setw(12) << row.true_volume
              << std::setw(12) << tv << std::setw(7) << rep.iterations << std::setw(10) << rep.times.total << "\n"
              << std::defaultfloat;
    all.push_back({{"row", name},
                   {"published", {{"estimated_volume", row.estimated_volume},
                              {"true_volume", row.true_volume},
                              {"iterations", row.iterations},
                              {"seconds", row.seconds}}},
                   {"report", to_json(rep)}});
  }
  out.write("bench.json", pretty(all));
  out.finish("bench");
  return every ? kExitOk : kExitNotVerified;
}

}  // namespace lyapdoa::cli
