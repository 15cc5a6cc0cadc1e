#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gfm/graph.hpp"

namespace gfm::ged {

/// Edit operation costs. Relabelling two equal labels is free.
struct EditCostModel {
  double node_insert = 1.0;
  double node_delete = 1.0;
  double node_relabel = 1.0;
  double edge_insert = 1.0;
  double edge_delete = 1.0;

  void validate() const;
};

enum class Method { kExactAStar, kBeam, kBipartite, kHed };

/// Node v of g1 maps to mapping[v] in g2, or to std::nullopt when deleted.
using NodeMapping = std::vector<std::optional<std::size_t>>;

struct GedResult {
  double distance = 0.0;
  Method method = Method::kExactAStar;
  std::size_t beam_width = 0;  // only for kBeam
  bool optimal = false;
  std::optional<NodeMapping> node_mapping;

  std::string method_name() const;
};

class SizeLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchOptions {
  /// Largest |V1| + |V2| accepted by exact search.
  std::size_t max_combined_nodes = 20;
  /// Ignore max_combined_nodes (the per-graph limit of 64 nodes still holds).
  bool allow_oversize = false;
};

/// Cost of the complete edit path induced by `mapping` (g2 nodes absent from
/// the mapping are inserted).
double induced_cost(const Graph& g1, const Graph& g2, const NodeMapping& mapping,
                    const EditCostModel& cost = {});

/// Exact GED by best-first search over partial node mappings.
///
/// Nodes of g1 are assigned in index order to an unused node of g2 or to
/// deletion. The heuristic adds a label-multiset bound on the unassigned nodes
/// to an edge-count bound on edges with an unassigned endpoint; both are
/// admissible under unit costs and scale with the cheapest applicable cost
/// otherwise. Ties on f are broken by the lexicographically smallest partial
/// mapping, so the returned mapping is deterministic.
GedResult astar_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost = {},
                    const SearchOptions& options = {});

/// Same search with the frontier cut to the best `width` partial mappings at
/// every depth. Returns an upper bound; the smaller of both argument orders is
/// reported so the result is symmetric.
GedResult beam_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost, std::size_t width);

/// Bipartite upper bound: assignment over the (n1+n2)^2 substitution /
/// deletion / insertion matrix with local degree costs, then the exact cost
/// of the induced edit path. Symmetrised over both argument orders.
GedResult bipartite_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost = {});

/// Hausdorff edit distance: every node pays the cheaper of half its best
/// substitution or its own deletion/insertion. Never exceeds the exact GED.
GedResult hed_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost = {});

struct Assignment {
  std::vector<std::size_t> column_of_row;
  double total = 0.0;
};

/// Exact minimum-cost perfect matching on a square matrix (row-major n x n)
/// via shortest augmenting paths with potentials.
Assignment lsap_solve(const std::vector<double>& costs, std::size_t n);
Assignment lsap_solve(const std::vector<std::vector<double>>& costs);

struct NormalizedGed {
  double nged;
  double similarity;
};

/// nGED = ged / ((n1 + n2) / 2) and similarity = exp(-nGED).
NormalizedGed nged_similarity(double ged, std::size_t n1, std::size_t n2);

/// An approximate method selector as used by min_label and the label command.
struct MethodSpec {
  Method method = Method::kBipartite;
  std::size_t beam_width = 0;

  static MethodSpec beam(std::size_t width) { return {Method::kBeam, width}; }
  static MethodSpec bipartite() { return {Method::kBipartite, 0}; }
  static MethodSpec hed() { return {Method::kHed, 0}; }
};

GedResult run_method(const Graph& g1, const Graph& g2, const MethodSpec& spec,
                     const EditCostModel& cost = {}, const SearchOptions& options = {});

/// Minimum distance over every listed method.
GedResult min_label(const Graph& g1, const Graph& g2, const std::vector<MethodSpec>& methods,
                    const EditCostModel& cost = {});

/// Parses "astar", "beam:W", "bipartite", "hed".
MethodSpec parse_method(const std::string& text);
std::string method_spec_name(const MethodSpec& spec);

}  // namespace gfm::ged
