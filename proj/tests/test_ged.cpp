#include <cmath>
#include <random>

#include "doctest.h"
#include "gfm/ged.hpp"
#include "gfm/synthetic.hpp"
#include "oracles.hpp"

using namespace gfm;

namespace {

std::vector<std::pair<Graph, Graph>> small_pairs(std::size_t count, std::uint64_t seed, std::size_t max_nodes) {
  std::vector<std::pair<Graph, Graph>> out;
  std::mt19937_64 rng(seed);
  SyntheticConfig cfg;
  cfg.min_nodes = 2;
  cfg.max_nodes = max_nodes;
  cfg.alphabet_size = 3;
  const auto alphabet = synthetic_alphabet(3);
  for (std::size_t t = 0; t < count; ++t) {
    if (t % 2 == 0) {
      const auto p = generate_synthetic_pair(rng(), cfg, rng() % 4);
      out.emplace_back(p.first, p.second);
    } else {
      const std::size_t n1 = 2 + rng() % (max_nodes - 1), n2 = 2 + rng() % (max_nodes - 1);
      out.emplace_back(random_connected_graph(rng, 0, n1, alphabet), random_connected_graph(rng, 1, n2, alphabet));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("ged") {

TEST_CASE("exact search examples") {
  const Graph c(0, {"C"}, {}), n(1, {"N"}, {});
  CHECK(ged::astar_ged(c, c).distance == 0.0);
  CHECK(ged::astar_ged(c, n).distance == 1.0);
  const Graph triangle(0, {"A", "A", "A"}, {{0, 1}, {1, 2}, {0, 2}});
  const Graph path(1, {"A", "A", "A"}, {{0, 1}, {1, 2}});
  CHECK(ged::astar_ged(triangle, path).distance == 1.0);
  CHECK(oracle::brute_force_ged(triangle, path) == 1.0);
  const auto r = ged::astar_ged(triangle, path);
  CHECK(r.optimal);
  REQUIRE(r.node_mapping.has_value());
  CHECK(ged::induced_cost(triangle, path, *r.node_mapping) == r.distance);
}

TEST_CASE("exact search matches enumeration on 4-node pairs") {
  for (const auto& [a, b] : small_pairs(60, 11, 4)) {
    CHECK(ged::astar_ged(a, b).distance == oracle::brute_force_ged(a, b));
  }
}

TEST_CASE("exact search refuses oversized inputs unless allowed") {
  std::mt19937_64 rng(3);
  const auto alphabet = synthetic_alphabet(2);
  const Graph a = random_connected_graph(rng, 0, 11, alphabet), b = random_connected_graph(rng, 1, 11, alphabet);
  CHECK_THROWS_AS(ged::astar_ged(a, b), ged::SizeLimitError);
  ged::SearchOptions ok;
  ok.allow_oversize = true;
  CHECK(ged::astar_ged(a, a, {}, ok).distance == 0.0);
}

TEST_CASE("beam search") {
  const Graph g(0, {"A", "B", "A"}, {{0, 1}, {1, 2}});
  for (std::size_t w : {1u, 3u, 50u}) CHECK(ged::beam_ged(g, g, {}, w).distance == 0.0);
  for (const auto& [a, b] : small_pairs(40, 12, 5)) {
    CHECK(ged::beam_ged(a, b, {}, 100000).distance == ged::astar_ged(a, b).distance);
  }
  for (const auto& [a, b] : small_pairs(100, 13, 7)) {
    CHECK(ged::beam_ged(a, b, {}, 3).distance >= ged::astar_ged(a, b).distance);
  }
  CHECK_THROWS(ged::beam_ged(g, g, {}, 0));
}

TEST_CASE("bipartite bound") {
  const Graph c(0, {"C"}, {}), n(1, {"N"}, {});
  CHECK(ged::bipartite_ged(c, c).distance == 0.0);
  // Cost matrix [[relabel 1, delete 1], [insert 1, 0]]: every assignment costs 1.
  CHECK(ged::bipartite_ged(c, n).distance == 1.0);
  for (const auto& [a, b] : small_pairs(100, 14, 7)) {
    const auto r = ged::bipartite_ged(a, b);
    CHECK(r.distance >= ged::astar_ged(a, b).distance);
    REQUIRE(r.node_mapping.has_value());
    CHECK(ged::induced_cost(a, b, *r.node_mapping) == doctest::Approx(r.distance));
  }
}

TEST_CASE("assignment solver") {
  CHECK(ged::lsap_solve(std::vector<std::vector<double>>{{0, 5, 5}, {5, 0, 5}, {5, 5, 0}}).total == 0.0);
  CHECK(ged::lsap_solve(std::vector<std::vector<double>>{{0, 5, 5}, {5, 0, 5}, {5, 5, 0}}).column_of_row ==
        std::vector<std::size_t>{0, 1, 2});
  CHECK(ged::lsap_solve(std::vector<std::vector<double>>{{1, 2}, {2, 1}}).total == 2.0);
  CHECK(ged::lsap_solve(std::vector<std::vector<double>>{{4, 1}, {2, 0}}).total == 3.0);
  std::mt19937_64 rng(15);
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto costs = oracle::uniform(rng, n * n, 0.0, 10.0);
    CHECK(ged::lsap_solve(costs, n).total == doctest::Approx(oracle::brute_force_lsap(costs, n)).epsilon(1e-12));
  }
  CHECK_THROWS(ged::lsap_solve(std::vector<double>{1, 2, 3}, 2));
}

TEST_CASE("hausdorff lower bound") {
  const Graph g(0, {"A", "B"}, {{0, 1}});
  CHECK(ged::hed_ged(g, g).distance == 0.0);
  const Graph a(0, {"C"}, {}), b(1, {"C"}, {});
  CHECK(ged::hed_ged(a, b).distance == 0.0);
  for (const auto& [x, y] : small_pairs(100, 16, 7)) {
    CHECK(ged::hed_ged(x, y).distance <= ged::astar_ged(x, y).distance);
  }
}

TEST_CASE("normalised similarity") {
  CHECK(ged::nged_similarity(0, 3, 3).similarity == 1.0);
  const auto a = ged::nged_similarity(4, 4, 4);
  CHECK(a.nged == 1.0);
  CHECK(a.similarity == doctest::Approx(0.367879).epsilon(1e-6));
  const auto b = ged::nged_similarity(2, 3, 5);
  CHECK(b.nged == 0.5);
  CHECK(b.similarity == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK_THROWS(ged::nged_similarity(-1, 3, 3));
}

TEST_CASE("min label") {
  const std::vector<ged::MethodSpec> upper{ged::MethodSpec::beam(3), ged::MethodSpec::bipartite()};
  const std::vector<ged::MethodSpec> all{ged::MethodSpec::beam(3), ged::MethodSpec::bipartite(),
                                         ged::MethodSpec::hed()};
  for (const auto& [a, b] : small_pairs(40, 17, 6)) {
    const double exact = ged::astar_ged(a, b).distance;
    CHECK(ged::min_label(a, b, {ged::MethodSpec::bipartite()}).distance == ged::bipartite_ged(a, b).distance);
    const double m = ged::min_label(a, b, all).distance;
    CHECK(m <= ged::beam_ged(a, b, {}, 3).distance);
    CHECK(m <= ged::bipartite_ged(a, b).distance);
    CHECK(m <= ged::hed_ged(a, b).distance);
    CHECK(ged::min_label(a, b, upper).distance >= exact);
    CHECK(ged::hed_ged(a, b).distance <= exact);
  }
  CHECK_THROWS(ged::min_label(Graph(0, {"A"}, {}), Graph(1, {"A"}, {}), {}));
}

TEST_CASE("method names round-trip") {
  for (const std::string s : {"astar", "beam:3", "bipartite", "hed"}) {
    CHECK(ged::method_spec_name(ged::parse_method(s)) == s);
  }
  CHECK_THROWS(ged::parse_method("beam:0"));
  CHECK_THROWS(ged::parse_method("beam:x"));
  CHECK_THROWS(ged::parse_method("vj"));
}

TEST_CASE("distances are symmetric") {
  for (const auto& [a, b] : small_pairs(30, 18, 7)) {
    CHECK(ged::astar_ged(a, b).distance == ged::astar_ged(b, a).distance);
    CHECK(ged::beam_ged(a, b, {}, 3).distance == ged::beam_ged(b, a, {}, 3).distance);
    CHECK(ged::bipartite_ged(a, b).distance == ged::bipartite_ged(b, a).distance);
    CHECK(ged::hed_ged(a, b).distance == ged::hed_ged(b, a).distance);
  }
}

}  // TEST_SUITE
