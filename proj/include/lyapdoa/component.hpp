#pragma once

// Connected component of {V <= 1} ∩ ROI that contains the origin.
//
// The sublevel set of a lifted V can have islands far from the equilibrium
// (where V happens to be small but the state is unstable). Only the part
// connected to the origin is a DOA estimate, so the verifier and the volume
// estimator work on this component. Connectivity is decided on a regular
// lattice by flood fill through axis neighbours.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lyapdoa/learner.hpp"
#include "lyapdoa/parallel.hpp"
#include "lyapdoa/sampling.hpp"

namespace lyapdoa {

/// Default lattice nodes per axis: about 2e6 nodes in total, capped at 401.
inline int default_component_nodes(int n) {
  const int k = static_cast<int>(std::floor(std::pow(2.0e6, 1.0 / n)));
  return std::clamp(k, 3, 401);
}

class SublevelComponent {
 public:
  SublevelComponent(const DynamicalSystem& sys, const LyapunovCandidate& cand, const Roi& roi, int nodes = 0)
      : roi_(roi), n_(roi.dim()), k_(nodes > 0 ? nodes : default_component_nodes(roi.dim())) {
    if (k_ < 2) throw ConfigError("component lattice needs at least 2 nodes per axis");
    const std::uint64_t total = lattice_size(n_, k_);
    inside_.assign(total, 0);
    parallel_for(
        total,
        [&](std::size_t i) {
          Vec x(static_cast<std::size_t>(n_));
          lattice_point(roi_, k_, i, x);
          inside_[i] = eval_V(sys, cand, x) <= 1.0 ? 1 : 0;
        },
        4096);
    flood();
  }

  [[nodiscard]] int nodes_per_axis() const { return k_; }
  [[nodiscard]] std::size_t component_nodes() const { return count_; }
  [[nodiscard]] std::size_t sublevel_nodes() const {
    return static_cast<std::size_t>(std::count_if(inside_.begin(), inside_.end(), [](std::uint8_t v) { return v != 0; }));
  }

  /// True when x lies in the ROI and a corner of its lattice cell belongs to
  /// the component, or x shares the origin's cell (the set may be thinner
  /// than one cell there). Callers still have to check V(x) <= 1 themselves.
  [[nodiscard]] bool touches(std::span<const double> x) const {
    if (!roi_.contains(x)) return false;
    std::vector<int> base(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) base[static_cast<std::size_t>(i)] = cell(i, x[static_cast<std::size_t>(i)]);
    if (base == origin_cell_) return true;
    const unsigned corners = 1u << n_;
    for (unsigned m = 0; m < corners; ++m) {
      std::uint64_t idx = 0;
      for (int i = 0; i < n_; ++i) idx = idx * static_cast<std::uint64_t>(k_) + static_cast<std::uint64_t>(base[static_cast<std::size_t>(i)] + ((m >> i) & 1u));
      if (inside_[idx] == 2) return true;
    }
    return false;
  }

 private:
  int cell(int axis, double v) const {
    const double lo = roi_.lower[static_cast<std::size_t>(axis)];
    const double hi = roi_.upper[static_cast<std::size_t>(axis)];
    const double t = (v - lo) / (hi - lo) * (k_ - 1);
    return std::clamp(static_cast<int>(std::floor(t)), 0, k_ - 2);
  }

  void flood() {
    // Seeds: the in-set corners of the cell holding the origin.
    Vec origin(static_cast<std::size_t>(n_), 0.0);
    if (!roi_.contains(origin)) return;
    std::vector<std::uint64_t> stack;
    std::vector<int>& base = origin_cell_;
    base.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) base[static_cast<std::size_t>(i)] = cell(i, 0.0);
    for (unsigned m = 0; m < (1u << n_); ++m) {
      std::uint64_t idx = 0;
      for (int i = 0; i < n_; ++i) idx = idx * static_cast<std::uint64_t>(k_) + static_cast<std::uint64_t>(base[static_cast<std::size_t>(i)] + ((m >> i) & 1u));
      if (inside_[idx] == 1) {
        inside_[idx] = 2;
        stack.push_back(idx);
      }
    }
    std::vector<std::uint64_t> stride(static_cast<std::size_t>(n_));
    std::uint64_t s = 1;
    for (int i = n_ - 1; i >= 0; --i) {
      stride[static_cast<std::size_t>(i)] = s;
      s *= static_cast<std::uint64_t>(k_);
    }
    while (!stack.empty()) {
      const std::uint64_t idx = stack.back();
      stack.pop_back();
      ++count_;
      for (int i = 0; i < n_; ++i) {
        const std::uint64_t st = stride[static_cast<std::size_t>(i)];
        const auto coord = static_cast<int>((idx / st) % static_cast<std::uint64_t>(k_));
        if (coord > 0 && inside_[idx - st] == 1) {
          inside_[idx - st] = 2;
          stack.push_back(idx - st);
        }
        if (coord < k_ - 1 && inside_[idx + st] == 1) {
          inside_[idx + st] = 2;
          stack.push_back(idx + st);
        }
      }
    }
  }

  Roi roi_;
  int n_;
  int k_;
  std::vector<std::uint8_t> inside_;  // 0 outside, 1 in the sublevel set, 2 in the origin component
  std::vector<int> origin_cell_;
  std::size_t count_ = 0;
};

}  // namespace lyapdoa
