#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace vaoi {

// Euclidean projection of v onto the probability simplex {x >= 0, sum x = 1},
// written in place. Sort-based, O(n log n).
inline void project_simplex(std::span<double> v) {
  const std::size_t n = v.size();
  if (n == 0) return;
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double tau = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    css += u[r];
    const double t = (css - 1.0) / static_cast<double>(r + 1);
    if (u[r] - t > 0.0) tau = t;
  }
  for (double& x : v) x = std::max(x - tau, 0.0);
}

// Projects every consecutive block of `block` entries onto its own simplex.
inline void project_simplex_blocks(std::span<double> v, std::size_t block) {
  for (std::size_t off = 0; off + block <= v.size(); off += block) project_simplex(v.subspan(off, block));
}

}  // namespace vaoi
