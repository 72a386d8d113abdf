#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rscran/rng.hpp"
#include "rscran/types.hpp"

namespace rscran::harness {

/// BS sites on a staggered (hexagonal-like) grid covering a square of side `area_km`:
/// ceil(sqrt(N)) rows, every other row shifted by half a cell, first N sites in row order.
inline std::vector<Point> bs_grid(int num_bs, double area_km) {
  if (num_bs < 1) throw std::invalid_argument("bs_grid: N must be >= 1");
  if (!(area_km > 0.0)) throw std::invalid_argument("bs_grid: area side must be positive");
  const int rows = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_bs))));
  const int cols = (num_bs + rows - 1) / rows;
  std::vector<Point> out;
  for (int r = 0; r < rows && static_cast<int>(out.size()) < num_bs; ++r) {
    const int in_row = std::min(cols, num_bs - static_cast<int>(out.size()));
    const double dx = area_km / in_row;
    const double shift = (r % 2 == 1 && in_row == cols) ? 0.25 * dx : 0.0;
    for (int c = 0; c < in_row; ++c) {
      out.push_back({(c + 0.5) * dx + shift, (r + 0.5) * area_km / rows});
    }
  }
  return out;
}

inline std::vector<Point> uniform_users(int num_users, double area_km, std::uint64_t seed) {
  if (num_users < 1) throw std::invalid_argument("uniform_users: K must be >= 1");
  Rng rng(seed);
  std::vector<Point> out(num_users);
  for (auto& p : out) {
    p.x_km = rng.uniform(0.0, area_km);
    p.y_km = rng.uniform(0.0, area_km);
  }
  return out;
}

}  // namespace rscran::harness
