#pragma once

// Reference rows for the five builtin systems: ROI, grid, learner settings and
// the published results used by the bench command and the acceptance suite.

#include <string>
#include <string_view>
#include <vector>

#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/error.hpp"
#include "lyapdoa/sampling.hpp"

namespace lyapdoa {

struct BenchmarkRow {
  std::string system;
  Roi roi;
  int grid = 0;  // points per axis
  int d = 1;
  double epsilon = 1e-3;
  double delta = 0.1;
  int admm_blocks = 1;  // 1: direct solve
  // Published values.
  double true_volume = 0.0;
  double estimated_volume = 0.0;
  int iterations = 0;
  double seconds = 0.0;
};

inline const std::vector<BenchmarkRow>& benchmark_rows() {
  static const std::vector<BenchmarkRow> rows{
      {"vdp2", {{-4, -10}, {4, 10}}, 30, 2, 1e-3, 0.15, 1, 66.84, 57.72, 2, 0.093},
      {"ex2_2d", {{-2.5, -2.5}, {2.5, 2.5}}, 30, 1, 1e-3, 0.1, 1, 8.736, 8.44, 1, 0.015},
      {"ex3_2d", {{-2, -7}, {7, 2}}, 30, 3, 1e-3, 0.1, 1, 17.28, 16.39, 3, 0.273},
      {"sys3d", {{-4, -5, -8.5}, {4, 5, 7}}, 21, 1, 1e-4, 0.1, 1, 888.12, 529.49, 8, 2.830},
      {"sys5d", {{-4, -10, -4, -5, -8.5}, {4, 10, 4, 5, 7}}, 9, 1, 1e-2, 0.5, 2, 31754.63, 5087.06, 5, 986.67},
  };
  return rows;
}

inline const BenchmarkRow& benchmark_row(std::string_view system) {
  for (const auto& r : benchmark_rows())
    if (r.system == system) return r;
  throw ConfigError("no benchmark row for '" + std::string(system) + "'");
}

}  // namespace lyapdoa
