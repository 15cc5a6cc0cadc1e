#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfm/dataset.hpp"
#include "gfm/model.hpp"

namespace gfm {

enum class Task { kRegression, kClassification };

std::string task_name(Task task);
Task parse_task(const std::string& text);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});
  /// One update from the current gradients; absent gradients count as zero.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct TrainConfig {
  Task task = Task::kRegression;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  FusionConfig fusion;
  SplitRatios split;

  /// 60/20/20 for regression, 80/10/10 for classification.
  static TrainConfig defaults(Task task);
  void validate() const;
};

struct DatasetSplit {
  std::vector<GraphPair> train;
  std::vector<GraphPair> val;
  std::vector<GraphPair> test;
};

/// Regression pairs are grouped by their query graph (pair.i) so one query's
/// ranked list stays within one split; classification pairs split directly.
DatasetSplit split_dataset(const Dataset& dataset, Task task, const SplitRatios& ratios, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  GfmModel model;  // best-validation state
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Dataset& dataset, const DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

std::string loss_curve_csv(const std::vector<EpochRecord>& curve);

/// Thread count for evaluation: GFM_THREADS when set, else hardware concurrency.
std::size_t evaluation_threads();

/// Eval-mode scores, batched and fanned out over `threads` workers. The
/// result does not depend on the thread count.
std::vector<double> score_pairs(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs,
                                std::size_t batch_size = 32, std::size_t threads = 0);

/// Task loss of eval-mode predictions on `pairs`.
double evaluation_loss(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs, Task task);

struct QueryMetrics {
  GraphId query;
  std::size_t size;
  double rho;
  double p_at_k;
};

struct EvalReport {
  Task task = Task::kRegression;
  std::size_t pairs = 0;
  double mse = 0.0;
  double rho = 0.0;
  double p_at_10 = 0.0;
  std::optional<double> auc;
  std::size_t k = 10;
  std::vector<std::string> warnings;
  std::vector<QueryMetrics> per_query;
  double ms_per_pair = 0.0;

  /// Canonical JSON; `with_timing` = false leaves out the wall-clock field.
  std::string to_json(bool with_timing = true) const;
};

/// Metrics from precomputed scores. Regression groups pairs by query
/// (pair.i); a query whose truth is constant has no defined rank correlation
/// and is left out of the rho mean.
EvalReport report_from_scores(Task task, const Dataset& dataset, std::span<const GraphPair> pairs,
                              std::span<const double> scores);

using Scorer = std::function<std::vector<double>(std::span<const GraphPair>)>;

EvalReport evaluate_regression(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs);
EvalReport evaluate_classification(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs);
/// Same protocol with an arbitrary scorer (timing included).
EvalReport evaluate_with(const Scorer& scorer, Task task, const Dataset& dataset, std::span<const GraphPair> pairs);

struct RankedGraph {
  GraphId id;
  double score;
};

/// Scores every database graph against the query; descending score, ascending id on ties.
std::vector<RankedGraph> rank_query(const GfmModel& model, const Graph& query, std::span<const Graph> database,
                                    const std::vector<std::string>& alphabet, std::size_t k);

struct TimingRow {
  std::size_t nodes;
  AttentionMode mode;
  double median_ms;
};

/// Median eval-mode latency of one pair with |V| = n per attention mode, after 3 warm-up calls.
std::vector<TimingRow> benchmark_runtime(const GfmModel& model, std::span<const std::size_t> sizes,
                                         std::size_t repetitions, std::uint64_t seed = 0);
std::string timing_csv(const std::vector<TimingRow>& rows);

/// The checkpoint's weights under another fusion config (shapes must agree).
GfmModel with_fusion_config(const GfmModel& model, const FusionConfig& config);

struct AblationRow {
  std::string name;
  FusionConfig fusion;
  EvalReport report;
};

/// Full model plus w/o fusion, w/o graph-sim and w/o node-sim, all trained
/// from the same seed on the same split and evaluated on its test part.
std::vector<AblationRow> run_ablation(const Dataset& dataset, const DatasetSplit& split, const TrainConfig& base);
std::string ablation_json(const std::vector<AblationRow>& rows, const TrainConfig& base);

}  // namespace gfm
