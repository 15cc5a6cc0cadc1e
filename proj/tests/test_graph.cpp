#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gfm/batch.hpp"
#include "gfm/dataset.hpp"
#include "gfm/ged.hpp"
#include "gfm/synthetic.hpp"

using namespace gfm;

TEST_SUITE("graph") {

TEST_CASE("graph normalises and validates edges") {
  const Graph g(1, {"A", "B", "C"}, {{2, 0}, {1, 0}});
  CHECK(g.edges() == std::vector<Edge>{{0, 1}, {0, 2}});
  CHECK(g.has_edge(2, 0));
  CHECK(g.degree(0) == 2);
  CHECK_THROWS_AS(Graph(1, {"A", "B"}, {{0, 0}}), GraphError);
  CHECK_THROWS_AS(Graph(1, {"A", "B"}, {{0, 2}}), GraphError);
  CHECK_THROWS_AS(Graph(1, {"A", "B"}, {{0, 1}, {1, 0}}), GraphError);
}

TEST_CASE("two graphs with ged 0 give similarity 1") {
  const Dataset ds = parse_dataset(R"({"graphs": [{"id": 0, "labels": ["C"], "edges": []},
                                                  {"id": 1, "labels": ["C"], "edges": []}],
                                       "pairs": [{"i": 0, "j": 1, "ged": 0}]})");
  REQUIRE(ds.pairs().size() == 1);
  CHECK(ds.similarity(ds.pairs()[0]) == 1.0);
}

TEST_CASE("unknown graph id is rejected") {
  try {
    parse_dataset(R"({"graphs": [{"id": 0, "labels": ["C"], "edges": []}], "pairs": [{"i": 0, "j": 99}]})");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("unknown graph id") != std::string::npos);
  }
}

TEST_CASE("malformed datasets name the offending field") {
  auto message = [](const std::string& text) {
    try {
      parse_dataset(text);
    } catch (const DatasetError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"graphs": [{"id": 0, "labels": ["C"], "edges": [], "colour": 1}]})").find("colour") !=
        std::string::npos);
  CHECK(message(R"({"graphs": [{"id": 0, "labels": ["C"], "edges": [[0, 3]]}]})").find("graphs[0]") !=
        std::string::npos);
  CHECK(message(R"({"graphs": [{"id": 0, "labels": ["C"], "edges": []}], "pairs": [{"i": 0, "j": 0, "label": 2}]})")
            .find("label") != std::string::npos);
  CHECK_FALSE(message("{").empty());
}

TEST_CASE("labelled dataset round-trips bit-identically") {
  const std::vector<Graph> graphs{Graph(3, {"C", "N", "O", "C"}, {{0, 1}, {1, 2}, {2, 3}}),
                                  Graph(7, {"C", "C", "S"}, {{0, 1}, {0, 2}})};
  const Dataset ds({}, graphs,
                   {GraphPair{3, 7, GedLabel{2.0, "astar"}}, GraphPair{7, 3, ClassLabel{-1}}, GraphPair{3, 3, {}}});
  const auto dir = std::filesystem::temp_directory_path() / "gfm_graph_test";
  std::filesystem::create_directories(dir);
  save_dataset(ds, dir / "a.json");
  const Dataset back = load_dataset(dir / "a.json");
  CHECK(back.graphs() == ds.graphs());
  CHECK(back.alphabet() == std::vector<std::string>{"C", "N", "O", "S"});
  CHECK(serialize_dataset(back) == serialize_dataset(ds));
  CHECK_FALSE(std::filesystem::exists(dir / "a.json.tmp"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("one-hot features") {
  const Graph g(0, {"C", "N"}, {{0, 1}});
  const Tensor x = one_hot_features(g, {"C", "N", "O"});
  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == std::vector<double>{1, 0, 0, 0, 1, 0});

  const Graph u(0, {"", "", ""}, {{0, 1}});
  const Tensor ones = one_hot_features(u, {});
  CHECK(ones.shape() == Shape{3, 1});
  for (double v : ones.data()) CHECK(v == 1.0);

  const Graph h(0, {"A", "B", "C"}, {{0, 1}, {1, 2}});
  const std::vector<std::size_t> perm{2, 0, 1};
  const Tensor a = one_hot_features(h, {"A", "B", "C"});
  const Tensor b = one_hot_features(h.permuted(perm), {"A", "B", "C"});
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t c = 0; c < 3; ++c) CHECK(a.at(v, c) == b.at(perm[v], c));
  CHECK_THROWS(one_hot_features(g, {"C"}));
}

TEST_CASE("synthetic pairs") {
  SyntheticConfig cfg;
  cfg.seed = 1;
  const auto same = generate_synthetic_pair(1, cfg, 0);
  CHECK(same.applied_edits == 0);
  CHECK(ged::astar_ged(same.first, same.second).distance == 0.0);

  SyntheticConfig one;
  one.min_nodes = one.max_nodes = 1;
  one.alphabet_size = 4;
  const auto relabel = generate_synthetic_pair(3, one, 1);
  CHECK(relabel.first.num_nodes() == 1);
  CHECK(ged::astar_ged(relabel.first, relabel.second).distance == 1.0);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> k_of(0, 4);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = k_of(rng);
    const auto p = generate_synthetic_pair(1000 + t, cfg, k);
    CHECK(p.first.num_nodes() >= 5);
    CHECK(p.second.num_nodes() <= 10);
    CHECK(p.second.is_connected());
    CHECK(ged::astar_ged(p.first, p.second).distance <= static_cast<double>(p.applied_edits));
    CHECK(p.applied_edits <= k);
  }
}

TEST_CASE("family datasets are reproducible and within bounds") {
  FamilyConfig cfg;
  cfg.graphs.seed = 4;
  cfg.families = 6;
  cfg.family_size = 4;
  cfg.cross_pairs = 2;
  const Dataset a = generate_family_dataset(cfg), b = generate_family_dataset(cfg);
  CHECK(serialize_dataset(a) == serialize_dataset(b));
  CHECK(a.graphs().size() == 24);
  CHECK(a.pairs().size() == 6 * 12 + 24 * 2);
  for (const auto& g : a.graphs()) {
    CHECK(g.num_nodes() >= 5);
    CHECK(g.num_nodes() <= 10);
  }
  for (const auto& p : a.pairs()) CHECK(p.is_unlabeled());
}

TEST_CASE("classification datasets are balanced") {
  SyntheticConfig cfg;
  cfg.seed = 2;
  cfg.max_edits = 2;
  const Dataset ds = generate_classification_dataset(cfg, 40);
  int pos = 0;
  for (const auto& p : ds.pairs()) {
    REQUIRE(p.has_class());
    pos += std::get<ClassLabel>(p.supervision).label > 0;
  }
  CHECK(pos == 20);
}

TEST_CASE("pad and batch") {
  const Graph g3(0, {"A", "B", "A"}, {{0, 1}, {1, 2}});
  const Graph g5(1, {"A", "A", "B", "B", "A"}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  const Graph g7(2, {"A", "A", "A", "A", "A", "A", "B"}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}});
  const Graph g2(3, {"B", "A"}, {{0, 1}});
  const Dataset ds({}, {g3, g5, g7, g2}, {GraphPair{0, 1, GedLabel{3, ""}}, GraphPair{2, 3, GedLabel{5, ""}}});

  const std::array<GraphPair, 1> first{ds.pairs()[0]};
  const auto single = pad_and_batch(ds, first, 32);
  REQUIRE(single.size() == 1);
  CHECK(single[0].Li == 3);
  CHECK(single[0].Lj == 5);
  CHECK(std::accumulate(single[0].mask_i.begin(), single[0].mask_i.end(), 0) == 3);
  CHECK(std::accumulate(single[0].mask_j.begin(), single[0].mask_j.end(), 0) == 5);

  const auto both = pad_and_batch(ds, ds.pairs(), 32);
  REQUIRE(both.size() == 1);
  const auto& b = both[0];
  CHECK(b.Li == 7);
  CHECK(b.Lj == 5);
  CHECK(b.targets.size() == 2);
  for (std::size_t r = 0; r < b.size * b.Li; ++r) {
    if (b.mask_i[r]) continue;
    for (std::size_t c = 0; c < b.xi.cols(); ++c) CHECK(b.xi.at(r, c) == 0.0);
    CHECK(b.adj_i.offsets[r + 1] == b.adj_i.offsets[r]);
  }
  for (std::size_t r = 0; r < b.size * b.Lj; ++r) {
    if (b.mask_j[r]) continue;
    for (std::size_t c = 0; c < b.xj.cols(); ++c) CHECK(b.xj.at(r, c) == 0.0);
  }

  const auto split = pad_and_batch(ds, ds.pairs(), 1, 5);
  CHECK(split.size() == 2);
  CHECK_THROWS(pad_and_batch(ds, ds.pairs(), 0));
}

}  // TEST_SUITE
