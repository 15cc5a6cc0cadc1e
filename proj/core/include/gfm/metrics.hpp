#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gfm/graph.hpp"

namespace gfm::metrics {

double mse(std::span<const double> pred, std::span<const double> truth);

/// 1-based ranks in ascending order; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Returns 0 when either side is constant.
double spearman(std::span<const double> pred, std::span<const double> truth);

/// Indices of the k largest values, ties broken by ascending id.
std::vector<std::size_t> top_k(std::span<const double> values, std::span<const GraphId> ids, std::size_t k);

/// |top_k(pred) ∩ top_k(truth)| / k with k = min(k, n).
double precision_at_k(std::span<const double> pred, std::span<const double> truth, std::span<const GraphId> ids,
                      std::size_t k);

/// Probability that a random positive outscores a random negative, ties 1/2.
double auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace gfm::metrics
