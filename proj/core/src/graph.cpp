#include "gfm/graph.hpp"

#include <algorithm>
#include <queue>

namespace gfm {

Graph::Graph(GraphId id, std::vector<std::string> labels, std::vector<Edge> edges)
    : id_(id), labels_(std::move(labels)), edges_(std::move(edges)) {
  const std::size_t n = labels_.size();
  if (n == 0) throw GraphError("graph " + std::to_string(id_) + ": needs at least one node");
  for (auto& [u, v] : edges_) {
    if (u == v) {
      throw GraphError("graph " + std::to_string(id_) + ": self-loop on node " + std::to_string(u));
    }
    if (u >= n || v >= n) {
      throw GraphError("graph " + std::to_string(id_) + ": edge (" + std::to_string(u) + "," +
                       std::to_string(v) + ") references a node outside [0," + std::to_string(n) + ")");
    }
    if (u > v) std::swap(u, v);
  }
  std::sort(edges_.begin(), edges_.end());
  const auto dup = std::adjacent_find(edges_.begin(), edges_.end());
  if (dup != edges_.end()) {
    throw GraphError("graph " + std::to_string(id_) + ": duplicate edge (" + std::to_string(dup->first) +
                     "," + std::to_string(dup->second) + ")");
  }
  neighbors_.assign(n, {});
  for (const auto& [u, v] : edges_) {
    neighbors_[u].push_back(v);
    neighbors_[v].push_back(u);
  }
  for (auto& list : neighbors_) std::sort(list.begin(), list.end());
}

bool Graph::has_edge(std::size_t u, std::size_t v) const {
  const auto& list = neighbors_[u];
  return std::binary_search(list.begin(), list.end(), v);
}

bool Graph::is_labeled() const {
  return std::any_of(labels_.begin(), labels_.end(), [](const auto& l) { return !l.empty(); });
}

bool Graph::is_connected() const {
  std::vector<bool> seen(num_nodes(), false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const auto v = frontier.front();
    frontier.pop();
    for (auto u : neighbors_[v]) {
      if (!seen[u]) {
        seen[u] = true;
        ++reached;
        frontier.push(u);
      }
    }
  }
  return reached == num_nodes();
}

Graph Graph::with_id(GraphId id) const { return Graph(id, labels_, edges_); }

Graph Graph::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != num_nodes()) throw GraphError("permutation size does not match node count");
  std::vector<std::string> labels(num_nodes());
  for (std::size_t v = 0; v < num_nodes(); ++v) labels.at(perm[v]) = labels_[v];
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const auto& [u, v] : edges_) edges.emplace_back(perm[u], perm[v]);
  return Graph(id_, std::move(labels), std::move(edges));
}

std::size_t feature_width(const std::vector<std::string>& alphabet) {
  return alphabet.empty() ? 1 : alphabet.size();
}

Tensor one_hot_features(const Graph& g, const std::vector<std::string>& alphabet) {
  const std::size_t n = g.num_nodes();
  if (alphabet.empty()) return Tensor::full({n, 1}, 1.0);
  const std::size_t f = alphabet.size();
  std::vector<double> data(n * f, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto it = std::find(alphabet.begin(), alphabet.end(), g.label(v));
    if (it == alphabet.end()) {
      throw GraphError("graph " + std::to_string(g.id()) + ": label '" + g.label(v) +
                       "' is not in the alphabet");
    }
    data[v * f + static_cast<std::size_t>(it - alphabet.begin())] = 1.0;
  }
  return Tensor({n, f}, std::move(data));
}

}  // namespace gfm
