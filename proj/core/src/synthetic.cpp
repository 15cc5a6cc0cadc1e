#include "gfm/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace gfm {

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string random_label(std::mt19937_64& rng, const std::vector<std::string>& alphabet) {
  return alphabet.empty() ? std::string() : alphabet[uniform_index(rng, alphabet.size())];
}

bool connected_without(const Graph& g, std::size_t skip_edge) {
  std::vector<Edge> edges;
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    if (e != skip_edge) edges.push_back(g.edges()[e]);
  return Graph(g.id(), g.labels(), std::move(edges)).is_connected();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string> synthetic_alphabet(std::size_t size) {
  if (size > 26) throw std::invalid_argument("synthetic alphabets hold at most 26 labels");
  std::vector<std::string> out;
  for (std::size_t k = 0; k < size; ++k) out.emplace_back(1, static_cast<char>('A' + k));
  return out;
}

Graph random_connected_graph(std::mt19937_64& rng, GraphId id, std::size_t nodes,
                             const std::vector<std::string>& alphabet) {
  if (nodes == 0) throw std::invalid_argument("random_connected_graph: needs at least one node");
  std::vector<std::string> labels(nodes);
  for (auto& l : labels) l = random_label(rng, alphabet);
  std::vector<Edge> edges;
  for (std::size_t v = 1; v < nodes; ++v) edges.emplace_back(uniform_index(rng, v), v);
  // Sparse extras keep degree statistics close to molecule- and CFG-like graphs.
  const std::size_t extra = nodes >= 3 ? uniform_index(rng, nodes / 2 + 1) : 0;
  for (std::size_t k = 0; k < extra; ++k) {
    const std::size_t u = uniform_index(rng, nodes), v = uniform_index(rng, nodes);
    if (u == v) continue;
    const Edge e{std::min(u, v), std::max(u, v)};
    if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(e);
  }
  return Graph(id, std::move(labels), std::move(edges));
}

std::size_t edit_cost(EditKind kind) {
  return kind == EditKind::kAddNode || kind == EditKind::kDeleteNode ? 2 : 1;
}

Graph apply_random_edit(std::mt19937_64& rng, const Graph& g, const std::vector<std::string>& alphabet,
                        std::size_t min_nodes, std::size_t max_nodes, EditKind* applied, std::size_t max_cost) {
  const std::size_t n = g.num_nodes();
  std::vector<EditKind> kinds{EditKind::kRelabelNode, EditKind::kAddNode, EditKind::kDeleteNode,
                              EditKind::kAddEdge, EditKind::kDeleteEdge};
  while (!kinds.empty()) {
    const std::size_t pick = uniform_index(rng, kinds.size());
    const EditKind kind = kinds[pick];
    if (edit_cost(kind) > max_cost) {
      kinds.erase(kinds.begin() + static_cast<std::ptrdiff_t>(pick));
      continue;
    }
    switch (kind) {
      case EditKind::kRelabelNode: {
        if (alphabet.size() < 2) break;
        auto labels = g.labels();
        const std::size_t v = uniform_index(rng, n);
        std::string next;
        do {
          next = random_label(rng, alphabet);
        } while (next == labels[v]);
        labels[v] = next;
        if (applied) *applied = kind;
        return Graph(g.id(), std::move(labels), g.edges());
      }
      case EditKind::kAddNode: {
        if (n >= max_nodes) break;
        auto labels = g.labels();
        labels.push_back(random_label(rng, alphabet));
        auto edges = g.edges();
        edges.emplace_back(uniform_index(rng, n), n);
        if (applied) *applied = kind;
        return Graph(g.id(), std::move(labels), std::move(edges));
      }
      case EditKind::kDeleteNode: {
        if (n <= std::max<std::size_t>(min_nodes, 1)) break;
        std::vector<std::size_t> leaves;
        for (std::size_t v = 0; v < n; ++v)
          if (g.degree(v) <= 1) leaves.push_back(v);
        if (leaves.empty()) break;
        const std::size_t victim = leaves[uniform_index(rng, leaves.size())];
        std::vector<std::string> labels;
        for (std::size_t v = 0; v < n; ++v)
          if (v != victim) labels.push_back(g.label(v));
        std::vector<Edge> edges;
        for (auto [u, v] : g.edges()) {
          if (u == victim || v == victim) continue;
          edges.emplace_back(u > victim ? u - 1 : u, v > victim ? v - 1 : v);
        }
        if (applied) *applied = kind;
        return Graph(g.id(), std::move(labels), std::move(edges));
      }
      case EditKind::kAddEdge: {
        std::vector<Edge> missing;
        for (std::size_t u = 0; u < n; ++u)
          for (std::size_t v = u + 1; v < n; ++v)
            if (!g.has_edge(u, v)) missing.emplace_back(u, v);
        if (missing.empty()) break;
        auto edges = g.edges();
        edges.push_back(missing[uniform_index(rng, missing.size())]);
        if (applied) *applied = kind;
        return Graph(g.id(), g.labels(), std::move(edges));
      }
      case EditKind::kDeleteEdge: {
        std::vector<std::size_t> removable;
        for (std::size_t e = 0; e < g.num_edges(); ++e)
          if (connected_without(g, e)) removable.push_back(e);
        if (removable.empty()) break;
        const std::size_t drop = removable[uniform_index(rng, removable.size())];
        std::vector<Edge> edges;
        for (std::size_t e = 0; e < g.num_edges(); ++e)
          if (e != drop) edges.push_back(g.edges()[e]);
        if (applied) *applied = kind;
        return Graph(g.id(), g.labels(), std::move(edges));
      }
    }
    kinds.erase(kinds.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  throw std::runtime_error("apply_random_edit: no feasible edit for graph " + std::to_string(g.id()));
}

namespace {

Graph shuffled(std::mt19937_64& rng, const Graph& g) {
  std::vector<std::size_t> perm(g.num_nodes());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return g.permuted(perm);
}

Graph edited(std::mt19937_64& rng, const Graph& root, GraphId id, std::size_t edits,
             const std::vector<std::string>& alphabet, const SyntheticConfig& config) {
  Graph g = root.with_id(id);
  for (std::size_t left = edits; left > 0;) {
    EditKind kind{};
    g = apply_random_edit(rng, g, alphabet, config.min_nodes, config.max_nodes, &kind, left);
    left -= edit_cost(kind);
  }
  return shuffled(rng, g);
}

void check_config(const SyntheticConfig& config) {
  if (config.min_nodes == 0 || config.min_nodes > config.max_nodes) {
    throw std::invalid_argument("synthetic node range must satisfy 1 <= min <= max");
  }
}

std::size_t draw_nodes(std::mt19937_64& rng, const SyntheticConfig& config) {
  return std::uniform_int_distribution<std::size_t>(config.min_nodes, config.max_nodes)(rng);
}

}  // namespace

SyntheticPair generate_synthetic_pair(std::uint64_t seed, const SyntheticConfig& config, std::size_t edits,
                                      GraphId first_id, GraphId second_id) {
  check_config(config);
  std::mt19937_64 rng(seed);
  const auto alphabet = synthetic_alphabet(config.alphabet_size);
  Graph first = random_connected_graph(rng, first_id, draw_nodes(rng, config), alphabet);
  Graph second = edited(rng, first, second_id, edits, alphabet, config);
  return {std::move(first), std::move(second), edits};
}

Dataset generate_family_dataset(const FamilyConfig& config) {
  check_config(config.graphs);
  if (config.family_size < 2) throw std::invalid_argument("family_size must be >= 2");
  const auto alphabet = synthetic_alphabet(config.graphs.alphabet_size);
  std::vector<Graph> graphs;
  std::vector<GraphPair> pairs;
  const std::size_t m = config.family_size;
  for (std::size_t f = 0; f < config.families; ++f) {
    std::mt19937_64 rng(derive_seed(config.graphs.seed, f));
    const auto base = static_cast<GraphId>(f * m);
    Graph root = random_connected_graph(rng, base, draw_nodes(rng, config.graphs), alphabet);
    graphs.push_back(root);
    for (std::size_t k = 1; k < m; ++k) {
      const std::size_t edits = std::uniform_int_distribution<std::size_t>(0, config.graphs.max_edits)(rng);
      graphs.push_back(edited(rng, root, base + static_cast<GraphId>(k), edits, alphabet, config.graphs));
    }
    if (m == 2) {
      pairs.push_back({base, base + 1, {}});
    } else {
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          if (a != b) pairs.push_back({base + static_cast<GraphId>(a), base + static_cast<GraphId>(b), {}});
    }
  }
  if (config.cross_pairs > 0 && config.families > 1) {
    std::mt19937_64 rng(derive_seed(config.graphs.seed, config.families + 1));
    const std::size_t total = graphs.size();
    for (std::size_t g = 0; g < total; ++g) {
      const std::size_t family = g / m;
      for (std::size_t c = 0; c < config.cross_pairs; ++c) {
        std::size_t other;
        do {
          other = uniform_index(rng, total);
        } while (other / m == family);
        pairs.push_back({static_cast<GraphId>(g), static_cast<GraphId>(other), {}});
      }
    }
  }
  return Dataset(alphabet, std::move(graphs), std::move(pairs));
}

Dataset generate_classification_dataset(const SyntheticConfig& config, std::size_t count) {
  check_config(config);
  const auto alphabet = synthetic_alphabet(config.alphabet_size);
  std::vector<int> labels(count);
  for (std::size_t p = 0; p < count; ++p) labels[p] = p % 2 == 0 ? 1 : -1;
  std::mt19937_64 order(derive_seed(config.seed, 0));
  std::shuffle(labels.begin(), labels.end(), order);
  std::vector<Graph> graphs;
  std::vector<GraphPair> pairs;
  for (std::size_t p = 0; p < count; ++p) {
    std::mt19937_64 rng(derive_seed(config.seed, p + 1));
    const auto a = static_cast<GraphId>(2 * p), b = a + 1;
    Graph first = random_connected_graph(rng, a, draw_nodes(rng, config), alphabet);
    if (labels[p] > 0) {
      const std::size_t edits = std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(config.max_edits, 1))(rng);
      graphs.push_back(edited(rng, first, b, edits, alphabet, config));
    } else {
      graphs.push_back(shuffled(rng, random_connected_graph(rng, b, draw_nodes(rng, config), alphabet)));
    }
    graphs.push_back(std::move(first));
    pairs.push_back({a, b, ClassLabel{labels[p]}});
  }
  return Dataset(alphabet, std::move(graphs), std::move(pairs));
}

}  // namespace gfm
