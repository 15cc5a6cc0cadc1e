#include "gfm/batch.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gfm {

namespace {

void fill_side(const Graph& g, const Tensor& features, std::size_t block, std::size_t L, std::size_t f0,
               std::vector<double>& data, std::vector<std::uint8_t>& mask,
               std::vector<std::vector<std::size_t>>& neighbors) {
  const std::size_t base = block * L;
  const auto& src = features.data();
  std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(base * f0));
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    mask[base + v] = 1;
    for (std::size_t u : g.neighbors()[v]) neighbors[base + v].push_back(base + u);
  }
}

ops::Adjacency to_csr(const std::vector<std::vector<std::size_t>>& lists) {
  ops::Adjacency adj;
  for (const auto& l : lists) {
    adj.neighbors.insert(adj.neighbors.end(), l.begin(), l.end());
    adj.offsets.push_back(adj.neighbors.size());
  }
  return adj;
}

}  // namespace

PairBatch make_batch(std::span<const GraphPairRef> pairs, const std::vector<std::string>& alphabet,
                     std::vector<double> targets, std::size_t min_Li, std::size_t min_Lj) {
  if (pairs.empty()) throw std::invalid_argument("make_batch: no pairs");
  if (!targets.empty() && targets.size() != pairs.size()) {
    throw std::invalid_argument("make_batch: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(pairs.size()) + " pairs");
  }
  PairBatch batch;
  batch.size = pairs.size();
  batch.Li = min_Li;
  batch.Lj = min_Lj;
  for (const auto& p : pairs) {
    batch.Li = std::max(batch.Li, p.first->num_nodes());
    batch.Lj = std::max(batch.Lj, p.second->num_nodes());
  }
  const std::size_t f0 = feature_width(alphabet);
  const std::size_t B = batch.size;
  std::vector<double> di(B * batch.Li * f0, 0.0), dj(B * batch.Lj * f0, 0.0);
  batch.mask_i.assign(B * batch.Li, 0);
  batch.mask_j.assign(B * batch.Lj, 0);
  std::vector<std::vector<std::size_t>> ni(B * batch.Li), nj(B * batch.Lj);
  for (std::size_t b = 0; b < B; ++b) {
    const Graph& gi = *pairs[b].first;
    const Graph& gj = *pairs[b].second;
    fill_side(gi, one_hot_features(gi, alphabet), b, batch.Li, f0, di, batch.mask_i, ni);
    fill_side(gj, one_hot_features(gj, alphabet), b, batch.Lj, f0, dj, batch.mask_j, nj);
    batch.nodes_i.push_back(gi.num_nodes());
    batch.nodes_j.push_back(gj.num_nodes());
  }
  batch.xi = Tensor({B * batch.Li, f0}, std::move(di));
  batch.xj = Tensor({B * batch.Lj, f0}, std::move(dj));
  batch.adj_i = to_csr(ni);
  batch.adj_j = to_csr(nj);
  batch.targets = std::move(targets);
  batch.pair_index.resize(B);
  std::iota(batch.pair_index.begin(), batch.pair_index.end(), 0);
  return batch;
}

std::vector<PairBatch> pad_and_batch(const Dataset& dataset, std::span<const GraphPair> pairs,
                                     std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw std::invalid_argument("pad_and_batch: batch size must be >= 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<PairBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<GraphPairRef> refs;
    std::vector<double> targets;
    bool labelled = true;
    for (std::size_t k = start; k < end; ++k) {
      const GraphPair& p = pairs[order[k]];
      refs.push_back({&dataset.graph(p.i), &dataset.graph(p.j)});
      if (p.is_unlabeled()) labelled = false;
      else targets.push_back(dataset.target(p));
    }
    PairBatch batch = make_batch(refs, dataset.alphabet(), labelled ? std::move(targets) : std::vector<double>{});
    batch.pair_index.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace gfm
