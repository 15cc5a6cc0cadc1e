#include "gfm/ged.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>

namespace gfm::ged {

namespace {

constexpr std::size_t kMaxSearchNodes = 64;
constexpr unsigned char kDeleted = 0xFF;

// Both graphs re-encoded over a shared integer label space with bitset rows.
struct Encoded {
  std::size_t n = 0;
  std::vector<int> label;
  std::vector<std::uint64_t> adj;
  std::size_t edges = 0;
};

std::pair<Encoded, Encoded> encode(const Graph& g1, const Graph& g2) {
  std::map<std::string, int> ids;
  for (const auto* g : {&g1, &g2})
    for (const auto& l : g->labels()) ids.emplace(l, 0);
  int next = 0;
  for (auto& [_, id] : ids) id = next++;
  auto build = [&](const Graph& g) {
    Encoded e;
    e.n = g.num_nodes();
    e.edges = g.num_edges();
    for (const auto& l : g.labels()) e.label.push_back(ids.at(l));
    e.adj.assign(e.n, 0);
    if (e.n <= kMaxSearchNodes) {
      for (const auto& [u, v] : g.edges()) {
        e.adj[u] |= std::uint64_t{1} << v;
        e.adj[v] |= std::uint64_t{1} << u;
      }
    }
    return e;
  };
  return {build(g1), build(g2)};
}

bool bit(std::uint64_t mask, std::size_t k) { return (mask >> k) & 1U; }

EditCostModel reversed(const EditCostModel& c) {
  EditCostModel r = c;
  std::swap(r.node_insert, r.node_delete);
  std::swap(r.edge_insert, r.edge_delete);
  return r;
}

// A node of the search tree: g1 nodes [0, depth) are assigned.
struct State {
  double g = 0.0;
  double f = 0.0;
  std::uint64_t used = 0;
  std::string map;  // map[u] = g2 index or kDeleted
  bool complete = false;
};

bool better(const State& a, const State& b) {
  if (a.f != b.f) return a.f < b.f;
  return a.map < b.map;
}

class Search {
 public:
  Search(const Graph& g1, const Graph& g2, const EditCostModel& cost) : cost_(cost) {
    cost_.validate();
    std::tie(a_, b_) = encode(g1, g2);
    if (a_.n > kMaxSearchNodes || b_.n > kMaxSearchNodes) {
      throw SizeLimitError("tree search supports at most " + std::to_string(kMaxSearchNodes) +
                           " nodes per graph");
    }
    labels_ = 0;
    for (int l : a_.label) labels_ = std::max(labels_, l + 1);
    for (int l : b_.label) labels_ = std::max(labels_, l + 1);
    suffix_counts_.assign((a_.n + 1) * labels_, 0);
    for (std::size_t k = a_.n; k-- > 0;) {
      for (int l = 0; l < labels_; ++l) suffix_counts_[k * labels_ + l] = suffix_counts_[(k + 1) * labels_ + l];
      suffix_counts_[k * labels_ + a_.label[k]] += 1;
    }
    prefix_edges_.assign(a_.n + 1, 0);
    for (std::size_t k = 1; k <= a_.n; ++k) {
      const std::uint64_t earlier = (std::uint64_t{1} << (k - 1)) - 1;
      prefix_edges_[k] = prefix_edges_[k - 1] + std::popcount(a_.adj[k - 1] & earlier);
    }
    min_node_ = std::min({cost_.node_insert, cost_.node_delete, cost_.node_relabel});
    min_edge_ = std::min(cost_.edge_insert, cost_.edge_delete);
  }

  State root() const {
    State s;
    s.f = heuristic(s);
    if (a_.n == 0) s = complete(s);
    return s;
  }

  std::size_t depth_limit() const { return a_.n; }
  std::size_t targets() const { return b_.n; }

  // Children of a partial state; the last level produces complete states.
  void expand(const State& s, std::vector<State>& out) const {
    const std::size_t u = s.map.size();
    for (std::size_t v = 0; v <= b_.n; ++v) {
      const bool del = v == b_.n;
      if (!del && bit(s.used, v)) continue;
      State c;
      c.map = s.map;
      c.map.push_back(del ? static_cast<char>(kDeleted) : static_cast<char>(v));
      c.used = del ? s.used : s.used | (std::uint64_t{1} << v);
      double step = del ? cost_.node_delete : (a_.label[u] == b_.label[v] ? 0.0 : cost_.node_relabel);
      for (std::size_t l = 0; l < u; ++l) {
        const bool e1 = bit(a_.adj[u], l);
        const auto ml = static_cast<unsigned char>(s.map[l]);
        if (del || ml == kDeleted) {
          if (e1) step += cost_.edge_delete;
          continue;
        }
        const bool e2 = bit(b_.adj[v], ml);
        if (e1 && !e2) step += cost_.edge_delete;
        if (!e1 && e2) step += cost_.edge_insert;
      }
      c.g = s.g + step;
      if (c.map.size() == a_.n) {
        out.push_back(complete(c));
      } else {
        c.f = c.g + heuristic(c);
        out.push_back(std::move(c));
      }
    }
  }

  NodeMapping mapping(const State& s) const {
    NodeMapping m(a_.n);
    for (std::size_t u = 0; u < a_.n; ++u) {
      const auto v = static_cast<unsigned char>(s.map[u]);
      if (v != kDeleted) m[u] = v;
    }
    return m;
  }

 private:
  State complete(State s) const {
    double extra = 0.0;
    std::size_t inserted_edges = 0;
    for (std::size_t v = 0; v < b_.n; ++v) {
      if (bit(s.used, v)) continue;
      extra += cost_.node_insert;
    }
    // g2 edges with at least one unused endpoint are inserted.
    for (std::size_t v = 0; v < b_.n; ++v) {
      for (std::size_t w = v + 1; w < b_.n; ++w) {
        if (bit(b_.adj[v], w) && (!bit(s.used, v) || !bit(s.used, w))) ++inserted_edges;
      }
    }
    s.g += extra + static_cast<double>(inserted_edges) * cost_.edge_insert;
    s.f = s.g;
    s.complete = true;
    return s;
  }

  double heuristic(const State& s) const {
    const std::size_t k = s.map.size();
    const std::size_t p = a_.n - k;
    std::vector<int> unused_counts(labels_, 0);
    std::size_t q = 0;
    std::size_t used_edges = 0;
    for (std::size_t v = 0; v < b_.n; ++v) {
      if (bit(s.used, v)) {
        used_edges += std::popcount(b_.adj[v] & s.used);
      } else {
        ++q;
        unused_counts[b_.label[v]] += 1;
      }
    }
    std::size_t common = 0;
    for (int l = 0; l < labels_; ++l)
      common += std::min(suffix_counts_[k * labels_ + l], unused_counts[l]);
    const double node_lb = static_cast<double>(std::max(p, q) - common) * min_node_;
    const auto e1 = static_cast<double>(a_.edges - prefix_edges_[k]);
    const auto e2 = static_cast<double>(b_.edges - used_edges / 2);
    return node_lb + std::abs(e1 - e2) * min_edge_;
  }

  EditCostModel cost_;
  Encoded a_, b_;
  int labels_ = 0;
  std::vector<int> suffix_counts_;
  std::vector<std::size_t> prefix_edges_;
  double min_node_ = 1.0, min_edge_ = 1.0;
};

struct HeapOrder {
  const std::vector<State>* pool;
  bool operator()(std::size_t x, std::size_t y) const { return better((*pool)[y], (*pool)[x]); }
};

NodeMapping invert(const NodeMapping& reverse_map, std::size_t n1) {
  NodeMapping m(n1);
  for (std::size_t v = 0; v < reverse_map.size(); ++v) {
    if (reverse_map[v]) m[*reverse_map[v]] = v;
  }
  return m;
}

GedResult beam_directed(const Graph& g1, const Graph& g2, const EditCostModel& cost, std::size_t width) {
  Search search(g1, g2, cost);
  std::vector<State> level{search.root()};
  std::vector<State> next;
  for (std::size_t depth = 0; depth < search.depth_limit(); ++depth) {
    next.clear();
    for (const auto& s : level) search.expand(s, next);
    if (next.size() > width) {
      std::nth_element(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(width), next.end(), better);
      next.resize(width);
    }
    std::swap(level, next);
  }
  const auto best = std::min_element(level.begin(), level.end(), better);
  GedResult r;
  r.distance = best->g;
  r.method = Method::kBeam;
  r.beam_width = width;
  r.optimal = false;
  r.node_mapping = search.mapping(*best);
  return r;
}

GedResult bipartite_directed(const Graph& g1, const Graph& g2, const EditCostModel& cost) {
  const std::size_t n1 = g1.num_nodes(), n2 = g2.num_nodes(), n = n1 + n2;
  double big = 1.0;
  std::vector<double> m(n * n, 0.0);
  auto star = [&](std::size_t du, std::size_t dv) {
    return du > dv ? static_cast<double>(du - dv) * cost.edge_delete
                   : static_cast<double>(dv - du) * cost.edge_insert;
  };
  for (std::size_t u = 0; u < n1; ++u)
    for (std::size_t v = 0; v < n2; ++v) {
      const double c = (g1.label(u) == g2.label(v) ? 0.0 : cost.node_relabel) + star(g1.degree(u), g2.degree(v));
      m[u * n + v] = c;
      big += c;
    }
  for (std::size_t u = 0; u < n1; ++u) big += cost.node_delete + static_cast<double>(g1.degree(u)) * cost.edge_delete;
  for (std::size_t v = 0; v < n2; ++v) big += cost.node_insert + static_cast<double>(g2.degree(v)) * cost.edge_insert;
  for (std::size_t u = 0; u < n1; ++u)
    for (std::size_t k = 0; k < n1; ++k)
      m[u * n + n2 + k] = k == u ? cost.node_delete + static_cast<double>(g1.degree(u)) * cost.edge_delete : big;
  for (std::size_t k = 0; k < n2; ++k)
    for (std::size_t v = 0; v < n2; ++v)
      m[(n1 + k) * n + v] = k == v ? cost.node_insert + static_cast<double>(g2.degree(v)) * cost.edge_insert : big;
  const auto assignment = lsap_solve(m, n);
  NodeMapping mapping(n1);
  for (std::size_t u = 0; u < n1; ++u) {
    const std::size_t col = assignment.column_of_row[u];
    if (col < n2) mapping[u] = col;
  }
  GedResult r;
  r.distance = induced_cost(g1, g2, mapping, cost);
  r.method = Method::kBipartite;
  r.optimal = false;
  r.node_mapping = std::move(mapping);
  return r;
}

// Picks the better of an orientation and its reverse, expressed as g1 -> g2.
GedResult symmetrize(GedResult forward, GedResult backward, std::size_t n1) {
  if (backward.distance < forward.distance) {
    if (backward.node_mapping) backward.node_mapping = invert(*backward.node_mapping, n1);
    return backward;
  }
  return forward;
}

}  // namespace

void EditCostModel::validate() const {
  for (double c : {node_insert, node_delete, node_relabel, edge_insert, edge_delete}) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("edit costs must be positive and finite");
  }
}

std::string GedResult::method_name() const {
  switch (method) {
    case Method::kExactAStar: return "astar";
    case Method::kBeam: return "beam:" + std::to_string(beam_width);
    case Method::kBipartite: return "bipartite";
    case Method::kHed: return "hed";
  }
  return "unknown";
}

double induced_cost(const Graph& g1, const Graph& g2, const NodeMapping& mapping, const EditCostModel& cost) {
  if (mapping.size() != g1.num_nodes()) throw std::invalid_argument("induced_cost: mapping size mismatch");
  std::vector<std::optional<std::size_t>> preimage(g2.num_nodes());
  double total = 0.0;
  for (std::size_t u = 0; u < mapping.size(); ++u) {
    if (!mapping[u]) {
      total += cost.node_delete;
      continue;
    }
    const std::size_t v = *mapping[u];
    if (v >= g2.num_nodes() || preimage[v]) throw std::invalid_argument("induced_cost: mapping is not injective");
    preimage[v] = u;
    if (g1.label(u) != g2.label(v)) total += cost.node_relabel;
  }
  for (std::size_t v = 0; v < g2.num_nodes(); ++v)
    if (!preimage[v]) total += cost.node_insert;
  for (const auto& [u, w] : g1.edges()) {
    const bool kept = mapping[u] && mapping[w] && g2.has_edge(*mapping[u], *mapping[w]);
    if (!kept) total += cost.edge_delete;
  }
  for (const auto& [v, x] : g2.edges()) {
    const bool kept = preimage[v] && preimage[x] && g1.has_edge(*preimage[v], *preimage[x]);
    if (!kept) total += cost.edge_insert;
  }
  return total;
}

GedResult astar_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost, const SearchOptions& options) {
  const std::size_t combined = g1.num_nodes() + g2.num_nodes();
  if (!options.allow_oversize && combined > options.max_combined_nodes) {
    throw SizeLimitError("exact GED limited to " + std::to_string(options.max_combined_nodes) +
                         " combined nodes (got " + std::to_string(combined) +
                         "); use beam, bipartite or hed for larger graphs");
  }
  Search search(g1, g2, cost);
  // Any edit path bounds the optimum; states with a larger f cannot win.
  const double bound = bipartite_directed(g1, g2, cost).distance + 1e-9;

  std::vector<State> pool;
  pool.push_back(search.root());
  std::priority_queue<std::size_t, std::vector<std::size_t>, HeapOrder> open(HeapOrder{&pool});
  open.push(0);
  std::vector<State> children;
  while (!open.empty()) {
    const std::size_t top = open.top();
    open.pop();
    if (pool[top].complete) {
      GedResult r;
      r.distance = pool[top].g;
      r.method = Method::kExactAStar;
      r.optimal = true;
      r.node_mapping = search.mapping(pool[top]);
      return r;
    }
    children.clear();
    search.expand(pool[top], children);
    pool[top].map = std::string();  // expanded states are never revisited
    for (auto& c : children) {
      if (c.f > bound) continue;
      pool.push_back(std::move(c));
      open.push(pool.size() - 1);
    }
  }
  throw std::logic_error("astar_ged: search exhausted without a complete mapping");
}

GedResult beam_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost, std::size_t width) {
  if (width == 0) throw std::invalid_argument("beam_ged: width must be >= 1");
  return symmetrize(beam_directed(g1, g2, cost, width), beam_directed(g2, g1, reversed(cost), width),
                    g1.num_nodes());
}

GedResult bipartite_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost) {
  cost.validate();
  return symmetrize(bipartite_directed(g1, g2, cost), bipartite_directed(g2, g1, reversed(cost)),
                    g1.num_nodes());
}

GedResult hed_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost) {
  cost.validate();
  const std::size_t n1 = g1.num_nodes(), n2 = g2.num_nodes();
  const double min_edge = std::min(cost.edge_insert, cost.edge_delete);
  auto sub = [&](std::size_t u, std::size_t v) {
    const double du = static_cast<double>(g1.degree(u)), dv = static_cast<double>(g2.degree(v));
    return (g1.label(u) == g2.label(v) ? 0.0 : cost.node_relabel) + 0.5 * std::abs(du - dv) * min_edge;
  };
  double total = 0.0;
  for (std::size_t u = 0; u < n1; ++u) {
    double best = cost.node_delete + 0.5 * static_cast<double>(g1.degree(u)) * cost.edge_delete;
    for (std::size_t v = 0; v < n2; ++v) best = std::min(best, 0.5 * sub(u, v));
    total += best;
  }
  for (std::size_t v = 0; v < n2; ++v) {
    double best = cost.node_insert + 0.5 * static_cast<double>(g2.degree(v)) * cost.edge_insert;
    for (std::size_t u = 0; u < n1; ++u) best = std::min(best, 0.5 * sub(u, v));
    total += best;
  }
  GedResult r;
  r.distance = total;
  r.method = Method::kHed;
  r.optimal = false;
  return r;
}

NormalizedGed nged_similarity(double ged, std::size_t n1, std::size_t n2) {
  if (!(ged >= 0.0)) throw std::invalid_argument("nged_similarity: ged must be non-negative");
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("nged_similarity: node counts must be >= 1");
  const double nged = ged / (static_cast<double>(n1 + n2) / 2.0);
  return {nged, std::exp(-nged)};
}

GedResult run_method(const Graph& g1, const Graph& g2, const MethodSpec& spec, const EditCostModel& cost,
                     const SearchOptions& options) {
  switch (spec.method) {
    case Method::kExactAStar: return astar_ged(g1, g2, cost, options);
    case Method::kBeam: return beam_ged(g1, g2, cost, spec.beam_width);
    case Method::kBipartite: return bipartite_ged(g1, g2, cost);
    case Method::kHed: return hed_ged(g1, g2, cost);
  }
  throw std::invalid_argument("run_method: unknown method");
}

GedResult min_label(const Graph& g1, const Graph& g2, const std::vector<MethodSpec>& methods,
                    const EditCostModel& cost) {
  if (methods.empty()) throw std::invalid_argument("min_label: at least one method is required");
  std::optional<GedResult> best;
  for (const auto& spec : methods) {
    auto r = run_method(g1, g2, spec, cost);
    if (!best || r.distance < best->distance) best = std::move(r);
  }
  return *best;
}

MethodSpec parse_method(const std::string& text) {
  if (text == "astar") return {Method::kExactAStar, 0};
  if (text == "bipartite") return MethodSpec::bipartite();
  if (text == "hed") return MethodSpec::hed();
  if (text.rfind("beam:", 0) == 0) {
    const std::string w = text.substr(5);
    std::size_t pos = 0;
    long long width = 0;
    try {
      width = std::stoll(w, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (w.empty() || pos != w.size() || width < 1) {
      throw std::invalid_argument("beam width must be a positive integer in '" + text + "'");
    }
    return MethodSpec::beam(static_cast<std::size_t>(width));
  }
  throw std::invalid_argument("unknown GED method '" + text + "'");
}

std::string method_spec_name(const MethodSpec& spec) {
  GedResult r;
  r.method = spec.method;
  r.beam_width = spec.beam_width;
  return r.method_name();
}

}  // namespace gfm::ged
