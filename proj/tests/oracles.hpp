#pragma once

// Reference implementations used as independent oracles. They share no code
// with the library beyond the Graph container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "gfm/graph.hpp"

namespace oracle {

/// Exact unit-cost GED by exhaustive enumeration of partial node mappings
/// (each g1 node maps to a distinct g2 node or is deleted). Branches whose
/// accumulated cost already reaches the best complete mapping are cut, which
/// never discards an optimum because every step adds a non-negative cost.
inline double brute_force_ged(const gfm::Graph& g1, const gfm::Graph& g2) {
  const std::size_t n1 = g1.num_nodes(), n2 = g2.num_nodes();
  constexpr std::size_t kDeleted = static_cast<std::size_t>(-1);
  std::vector<std::size_t> map(n1, kDeleted);
  std::vector<bool> used(n2, false);
  double best = std::numeric_limits<double>::infinity();

  auto finish = [&](double partial) {
    double c = partial;
    for (std::size_t w = 0; w < n2; ++w)
      if (!used[w]) c += 1.0;
    for (const auto& [a, b] : g2.edges())
      if (!used[a] || !used[b]) c += 1.0;
    return c;
  };

  auto step_cost = [&](std::size_t u) {
    double c = 0.0;
    const std::size_t w = map[u];
    if (w == kDeleted) c += 1.0;
    else if (g1.label(u) != g2.label(w)) c += 1.0;
    for (std::size_t v = 0; v < u; ++v) {
      const bool e1 = g1.has_edge(u, v);
      const bool both = w != kDeleted && map[v] != kDeleted;
      const bool e2 = both && g2.has_edge(w, map[v]);
      if (e1 && !e2) c += 1.0;
      if (both && e2 && !e1) c += 1.0;
    }
    return c;
  };

  auto dfs = [&](auto&& self, std::size_t u, double partial) -> void {
    if (partial >= best) return;
    if (u == n1) {
      best = std::min(best, finish(partial));
      return;
    }
    for (std::size_t w = 0; w <= n2; ++w) {
      const bool del = w == n2;
      if (!del && used[w]) continue;
      map[u] = del ? kDeleted : w;
      if (!del) used[w] = true;
      self(self, u + 1, partial + step_cost(u));
      if (!del) used[w] = false;
      map[u] = kDeleted;
    }
  };
  dfs(dfs, 0, 0.0);
  return best;
}

/// Minimum assignment cost over all n! permutations.
inline double brute_force_lsap(const std::vector<double>& costs, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += costs[r * n + perm[r]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return n == 0 ? 0.0 : best;
}

inline double naive_mse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(s / a.size());
}

/// Average 1-based ranks by counting smaller and equal values for every item.
inline std::vector<double> naive_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) less += 1;
      else if (v[j] == v[i]) equal += 1;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double naive_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = naive_ranks(a), rb = naive_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i], mb += rb[i];
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0 || db == 0) return 0.0;
  return num / std::sqrt(da * db);
}

/// Repeated selection of the best remaining item (highest value, then lowest id).
inline std::vector<std::size_t> naive_top_k(const std::vector<double>& v, const std::vector<std::int64_t>& ids,
                                            std::size_t k) {
  std::vector<bool> taken(v.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t step = 0; step < std::min(k, v.size()); ++step) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (taken[i]) continue;
      if (!best || v[i] > v[*best] || (v[i] == v[*best] && ids[i] < ids[*best])) best = i;
    }
    taken[*best] = true;
    out.push_back(*best);
  }
  return out;
}

inline double naive_precision_at_k(const std::vector<double>& pred, const std::vector<double>& truth,
                                   const std::vector<std::int64_t>& ids, std::size_t k) {
  const auto a = naive_top_k(pred, ids, k), b = naive_top_k(truth, ids, k);
  std::size_t hits = 0;
  for (auto x : a)
    for (auto y : b) hits += x == y;
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting 1/2.
inline double naive_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double good = 0, total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] <= 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0) continue;
      total += 1;
      if (scores[i] > scores[j]) good += 1;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / total;
}

/// out[b][f] = sum_l tanh(xi[b*L+l][f]) * tanh(xj[b*L+l][f]) as an explicit loop.
inline std::vector<double> node_similarity_loop(const std::vector<double>& xi, const std::vector<double>& xj,
                                                std::size_t B, std::size_t L, std::size_t F) {
  std::vector<double> out(B * F, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t l = 0; l < L; ++l)
        out[b * F + f] += std::tanh(xi[(b * L + l) * F + f]) * std::tanh(xj[(b * L + l) * F + f]);
  return out;
}

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace oracle
