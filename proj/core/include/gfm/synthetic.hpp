#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gfm/dataset.hpp"
#include "gfm/graph.hpp"

namespace gfm {

/// Reproducible graph generation. Every choice derives from one root seed.
struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t min_nodes = 5;
  std::size_t max_nodes = 10;
  std::size_t alphabet_size = 4;  // 0 generates unlabeled graphs
  std::size_t max_edits = 4;
};

/// The first `size` labels of the synthetic alphabet ("A", "B", ...).
std::vector<std::string> synthetic_alphabet(std::size_t size);

/// Random connected graph: a random spanning tree plus a few extra edges.
Graph random_connected_graph(std::mt19937_64& rng, GraphId id, std::size_t nodes,
                             const std::vector<std::string>& alphabet);

enum class EditKind { kRelabelNode, kAddNode, kDeleteNode, kAddEdge, kDeleteEdge };

/// Unit-cost price of an edit. Adding a node brings its attaching edge and
/// deleting a leaf takes its edge, so node edits cost 2.
std::size_t edit_cost(EditKind kind);

/// Applies one uniformly chosen feasible edit that keeps the graph connected,
/// its size within [min_nodes, max_nodes] and its cost within max_cost.
/// Throws when no edit is feasible.
Graph apply_random_edit(std::mt19937_64& rng, const Graph& g, const std::vector<std::string>& alphabet,
                        std::size_t min_nodes, std::size_t max_nodes, EditKind* applied = nullptr,
                        std::size_t max_cost = 2);

struct SyntheticPair {
  Graph first;
  Graph second;
  std::size_t applied_edits;
};

/// Random edits with total unit cost `edits` turn the first graph into the
/// second, whose node order is then shuffled. GED(first, second) <= edits.
SyntheticPair generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config, std::size_t edits,
                                      GraphId first_id = 0, GraphId second_id = 1);

/// Families of graphs: each family is a random root plus `family_size - 1`
/// variants, each 0..max_edits unit-cost edits away from the root. With family_size 2
/// every family contributes exactly one (root, variant) pair; larger families
/// contribute every ordered within-family pair. `cross_pairs` adds that many
/// pairs from each graph to graphs of other families. Pairs are unlabeled.
struct FamilyConfig {
  SyntheticConfig graphs;
  std::size_t families = 10;
  std::size_t family_size = 2;
  std::size_t cross_pairs = 0;
};

Dataset generate_family_dataset(const FamilyConfig& config);

/// Classification pairs: +1 pairs are 1..max_edits edits apart, -1 pairs are
/// two independently drawn graphs. Labels alternate in a seeded shuffle so
/// the classes are balanced.
Dataset generate_classification_dataset(const SyntheticConfig& config, std::size_t pairs);

/// Shared seed derivation: mixes a root seed with a stream index.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

}  // namespace gfm
