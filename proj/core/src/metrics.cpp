#include "gfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gfm::metrics {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> truth) {
  same_length(pred.size(), truth.size(), "mse");
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> truth) {
  same_length(pred.size(), truth.size(), "spearman");
  const std::size_t n = pred.size();
  if (n < 2) return 0.0;
  const auto rp = average_ranks(pred), rt = average_ranks(truth);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double num = 0.0, dp = 0.0, dt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rp[i] - mean) * (rt[i] - mean);
    dp += (rp[i] - mean) * (rp[i] - mean);
    dt += (rt[i] - mean) * (rt[i] - mean);
  }
  if (dp == 0.0 || dt == 0.0) return 0.0;
  return num / std::sqrt(dp * dt);
}

std::vector<std::size_t> top_k(std::span<const double> values, std::span<const GraphId> ids, std::size_t k) {
  same_length(values.size(), ids.size(), "top_k");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return ids[a] < ids[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

double precision_at_k(std::span<const double> pred, std::span<const double> truth, std::span<const GraphId> ids,
                      std::size_t k) {
  same_length(pred.size(), truth.size(), "precision_at_k");
  const std::size_t kk = std::min(k, pred.size());
  if (kk == 0) throw std::invalid_argument("precision_at_k: empty list");
  auto a = top_k(pred, ids, kk), b = top_k(truth, ids, kk);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(kk);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  same_length(scores.size(), labels.size(), "auc");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l > 0) ++pos;
    else ++neg;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: needs at least one positive and one negative");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] > 0) rank_sum += ranks[i];
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

}  // namespace gfm::metrics
