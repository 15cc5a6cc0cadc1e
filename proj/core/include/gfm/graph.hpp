#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfm/tensor.hpp"

namespace gfm {

using GraphId = std::int64_t;
using Edge = std::pair<std::size_t, std::size_t>;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Undirected simple graph with one categorical label per node.
///
/// Edges are normalised to u < v and kept sorted. Unlabeled graphs carry an
/// empty string for every node.
class Graph {
 public:
  Graph(GraphId id, std::vector<std::string> labels, std::vector<Edge> edges);

  GraphId id() const { return id_; }
  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t v) const { return labels_[v]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::vector<std::size_t>>& neighbors() const { return neighbors_; }
  std::size_t degree(std::size_t v) const { return neighbors_[v].size(); }
  bool has_edge(std::size_t u, std::size_t v) const;
  bool is_labeled() const;
  bool is_connected() const;

  Graph with_id(GraphId id) const;
  /// Node v of this graph becomes node perm[v] of the result.
  Graph permuted(const std::vector<std::size_t>& perm) const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.id_ == b.id_ && a.labels_ == b.labels_ && a.edges_ == b.edges_;
  }

 private:
  GraphId id_;
  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// One-hot rows over `alphabet` (|V| x |alphabet|); an empty alphabet selects
/// the unlabeled convention of a single all-ones column.
Tensor one_hot_features(const Graph& g, const std::vector<std::string>& alphabet);

/// Number of feature columns one_hot_features produces for `alphabet`.
std::size_t feature_width(const std::vector<std::string>& alphabet);

}  // namespace gfm
