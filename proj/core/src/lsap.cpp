#include <cmath>
#include <limits>
#include <stdexcept>

#include "gfm/ged.hpp"

namespace gfm::ged {

// Shortest augmenting path Hungarian method with row/column potentials,
// O(n^3). Rows are inserted one at a time; arrays use a 1-based layout with
// column 0 as the virtual source.
Assignment lsap_solve(const std::vector<double>& costs, std::size_t n) {
  if (costs.size() != n * n) {
    throw std::invalid_argument("lsap_solve: matrix must be square, got " + std::to_string(costs.size()) +
                                " entries for n=" + std::to_string(n));
  }
  for (double c : costs) {
    if (!std::isfinite(c)) throw std::invalid_argument("lsap_solve: costs must be finite");
  }
  Assignment result;
  result.column_of_row.assign(n, 0);
  if (n == 0) return result;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  auto at = [&](std::size_t r, std::size_t c) { return costs[(r - 1) * n + (c - 1)]; };

  for (std::size_t row = 1; row <= n; ++row) {
    row_of[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = row_of[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = at(r0, c) - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[row_of[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (row_of[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      row_of[col0] = row_of[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  for (std::size_t c = 1; c <= n; ++c) result.column_of_row[row_of[c] - 1] = c - 1;
  for (std::size_t r = 0; r < n; ++r) result.total += costs[r * n + result.column_of_row[r]];
  return result;
}

Assignment lsap_solve(const std::vector<std::vector<double>>& costs) {
  const std::size_t n = costs.size();
  std::vector<double> flat;
  flat.reserve(n * n);
  for (const auto& row : costs) {
    if (row.size() != n) {
      throw std::invalid_argument("lsap_solve: matrix must be square, row has " + std::to_string(row.size()) +
                                  " columns for " + std::to_string(n) + " rows");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return lsap_solve(flat, n);
}

}  // namespace gfm::ged
