#pragma once

// Exact earth mover's distance via the transportation simplex (northwest
// corner start, u-v potentials, pivoting around the basis-tree cycle).

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "selfreflect/errors.hpp"

namespace selfreflect {

struct TransportResult {
  double cost = 0.0;
  std::vector<std::vector<double>> plan;
};

inline TransportResult solve_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                       const std::vector<std::vector<double>>& cost) {
  const std::size_t m = supply.size(), n = demand.size();
  if (m == 0 || n == 0) throw InfeasibleError("transport problem has no rows or columns");
  if (cost.size() != m) throw DimensionMismatchError("cost matrix row count differs from supply");
  for (const auto& row : cost)
    if (row.size() != n) throw DimensionMismatchError("cost matrix column count differs from demand");
  for (double s : supply)
    if (!(s >= 0.0)) throw InfeasibleError("negative supply");
  for (double d : demand)
    if (!(d >= 0.0)) throw InfeasibleError("negative demand");
  const double ts = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double td = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(ts - td) > 1e-6) throw InfeasibleError("supply and demand totals differ");

  std::vector<std::vector<double>> x(m, std::vector<double>(n, 0.0));
  std::vector<std::vector<bool>> basic(m, std::vector<bool>(n, false));
  {
    std::vector<double> s = supply, d = demand;
    std::size_t i = 0, j = 0;
    while (i < m && j < n) {
      const double q = std::min(s[i], d[j]);
      x[i][j] = q;
      basic[i][j] = true;
      s[i] -= q;
      d[j] -= q;
      if (i + 1 < m && (s[i] <= d[j] || j + 1 == n)) ++i;
      else ++j;
    }
  }

  const std::size_t nodes = m + n;
  std::vector<double> pot(nodes);
  std::vector<std::size_t> parent(nodes);
  std::vector<bool> seen(nodes);
  auto neighbours = [&](std::size_t node, auto&& visit) {
    if (node < m) {
      for (std::size_t j = 0; j < n; ++j)
        if (basic[node][j]) visit(m + j);
    } else {
      for (std::size_t i = 0; i < m; ++i)
        if (basic[i][node - m]) visit(i);
    }
  };
  // Breadth-first over the basis tree from `root`, filling parent pointers.
  auto walk = [&](std::size_t root, bool potentials) {
    std::fill(seen.begin(), seen.end(), false);
    std::vector<std::size_t> queue{root};
    seen[root] = true;
    parent[root] = root;
    if (potentials) pot[root] = 0.0;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const std::size_t u = queue[h];
      neighbours(u, [&](std::size_t v) {
        if (seen[v]) return;
        seen[v] = true;
        parent[v] = u;
        if (potentials) {
          // u_i + v_j = c_ij on basic cells.
          const double c = u < m ? cost[u][v - m] : cost[v][u - m];
          pot[v] = c - pot[u];
        }
        queue.push_back(v);
      });
    }
  };

  const std::size_t max_iter = 50 * nodes * nodes + 1000;
  for (std::size_t iter = 0;; ++iter) {
    if (iter > max_iter) throw InfeasibleError("transportation simplex did not converge");
    walk(0, true);
    double best = -1e-12;
    std::size_t ei = m, ej = n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (basic[i][j]) continue;
        const double rc = cost[i][j] - pot[i] - pot[m + j];
        if (rc < best) {
          best = rc;
          ei = i;
          ej = j;
        }
      }
    if (ei == m) break;

    // Tree path from row ei to column ej closes the cycle with the entering cell.
    walk(ei, false);
    std::vector<std::pair<std::size_t, std::size_t>> path;  // cells from column ej back to row ei
    for (std::size_t v = m + ej; v != ei; v = parent[v]) {
      const std::size_t u = parent[v];
      path.push_back(u < m ? std::make_pair(u, v - m) : std::make_pair(v, u - m));
    }
    // Cells at even positions lose flow, odd positions gain.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = 0;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const auto [i, j] = path[k];
      if (x[i][j] < theta) {
        theta = x[i][j];
        leave = k;
      }
    }
    x[ei][ej] = theta;
    basic[ei][ej] = true;
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto [i, j] = path[k];
      x[i][j] += (k % 2 == 0 ? -theta : theta);
      if (x[i][j] < 0.0) x[i][j] = 0.0;
    }
    const auto [li, lj] = path[leave];
    basic[li][lj] = false;
    x[li][lj] = 0.0;
  }

  TransportResult r;
  r.plan = std::move(x);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) r.cost += r.plan[i][j] * cost[i][j];
  return r;
}

}  // namespace selfreflect
