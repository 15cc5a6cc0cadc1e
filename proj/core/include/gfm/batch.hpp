#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfm/dataset.hpp"
#include "gfm/graph.hpp"
#include "gfm/ops.hpp"
#include "gfm/tensor.hpp"

namespace gfm {

/// B graph pairs in padded layout. Pair b occupies rows [b*Li, (b+1)*Li) of
/// the left-side tensors and rows [b*Lj, (b+1)*Lj) of the right-side ones;
/// a graph's nodes keep their order and fill the first rows of its block.
struct PairBatch {
  std::size_t size = 0;
  std::size_t Li = 0;
  std::size_t Lj = 0;
  Tensor xi;
  Tensor xj;
  std::vector<std::uint8_t> mask_i;
  std::vector<std::uint8_t> mask_j;
  ops::Adjacency adj_i;
  ops::Adjacency adj_j;
  std::vector<std::size_t> nodes_i;
  std::vector<std::size_t> nodes_j;
  std::vector<double> targets;          // empty for unlabelled batches
  std::vector<std::size_t> pair_index;  // position of each pair in the source list
};

struct GraphPairRef {
  const Graph* first;
  const Graph* second;
};

/// Builds one batch with Li/Lj at least the given minimums (0 = the per-batch maxima).
PairBatch make_batch(std::span<const GraphPairRef> pairs, const std::vector<std::string>& alphabet,
                     std::vector<double> targets = {}, std::size_t min_Li = 0, std::size_t min_Lj = 0);

/// Splits `pairs` into batches of at most `batch_size`. With a shuffle seed the
/// pair order is permuted first, deterministically.
std::vector<PairBatch> pad_and_batch(const Dataset& dataset, std::span<const GraphPair> pairs,
                                     std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed = {});

}  // namespace gfm
