#include "gfm/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gfm/batch.hpp"
#include "gfm/metrics.hpp"
#include "gfm/synthetic.hpp"
#include "json.hpp"

namespace gfm {

using nlohmann::json;

std::string task_name(Task task) { return task == Task::kRegression ? "regression" : "classification"; }

Task parse_task(const std::string& text) {
  if (text == "regression") return Task::kRegression;
  if (text == "classification") return Task::kClassification;
  throw ConfigError("unknown task '" + text + "' (expected regression or classification)");
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].mutable_data();
    const auto g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      data[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

TrainConfig TrainConfig::defaults(Task task) {
  TrainConfig c;
  c.task = task;
  if (task == Task::kClassification) c.split = {0.8, 0.1, 0.1};
  return c;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (split.train < 0 || split.val < 0 || split.test < 0 ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  fusion.validate();
}

namespace {

bool matches_task(const GraphPair& p, Task task) {
  return task == Task::kRegression ? p.has_ged() : p.has_class();
}

void check_pairs(std::span<const GraphPair> pairs, Task task, const char* where) {
  for (const auto& p : pairs) {
    if (!matches_task(p, task)) {
      throw ConfigError(std::string(where) + " pair (" + std::to_string(p.i) + ", " + std::to_string(p.j) +
                        ") has no " + (task == Task::kRegression ? "ged" : "class label") + " for task " +
                        task_name(task));
    }
  }
}

std::array<std::size_t, 2> cut_points(std::size_t n, const SplitRatios& r) {
  const auto n_train = static_cast<std::size_t>(std::llround(r.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(r.val * static_cast<double>(n)));
  const std::size_t a = std::min(n, n_train);
  return {a, std::min(n, a + n_val)};
}

Tensor column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n, 1}, std::move(values));
}

std::vector<std::pair<std::string, Tensor>> snapshot(const GfmModel& model) {
  auto state = model.state();
  for (auto& entry : state) entry.second = entry.second.clone();
  return state;
}

json report_json(const EvalReport& r, bool with_timing) {
  json j;
  j["task"] = task_name(r.task);
  j["pairs"] = r.pairs;
  j["mse"] = r.mse;
  j["mse_1e-3"] = r.mse * 1e3;
  if (r.task == Task::kRegression) {
    j["rho"] = r.rho;
    j["p_at_10"] = r.p_at_10;
    j["k"] = r.k;
    json rows = json::array();
    for (const auto& q : r.per_query) {
      json row;
      row["query"] = q.query;
      row["size"] = q.size;
      row["rho"] = std::isnan(q.rho) ? json(nullptr) : json(q.rho);
      row["p_at_k"] = q.p_at_k;
      rows.push_back(row);
    }
    j["per_query"] = rows;
  } else {
    j["auc"] = r.auc.value_or(0.5);
  }
  j["warnings"] = r.warnings;
  if (with_timing) j["ms_per_pair"] = r.ms_per_pair;
  return j;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

DatasetSplit split_dataset(const Dataset& dataset, Task task, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<GraphPair> usable;
  for (const auto& p : dataset.pairs())
    if (matches_task(p, task)) usable.push_back(p);
  std::mt19937_64 rng(derive_seed(seed, 0x5917));
  DatasetSplit out;
  if (task == Task::kClassification) {
    std::shuffle(usable.begin(), usable.end(), rng);
    const auto [a, b] = cut_points(usable.size(), ratios);
    out.train.assign(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(a));
    out.val.assign(usable.begin() + static_cast<std::ptrdiff_t>(a), usable.begin() + static_cast<std::ptrdiff_t>(b));
    out.test.assign(usable.begin() + static_cast<std::ptrdiff_t>(b), usable.end());
    return out;
  }
  std::vector<GraphId> queries;
  for (const auto& p : usable) queries.push_back(p.i);
  std::sort(queries.begin(), queries.end());
  queries.erase(std::unique(queries.begin(), queries.end()), queries.end());
  std::shuffle(queries.begin(), queries.end(), rng);
  const auto [a, b] = cut_points(queries.size(), ratios);
  std::map<GraphId, int> part;
  for (std::size_t k = 0; k < queries.size(); ++k) part[queries[k]] = k < a ? 0 : (k < b ? 1 : 2);
  for (const auto& p : usable) {
    const int where = part.at(p.i);
    (where == 0 ? out.train : where == 1 ? out.val : out.test).push_back(p);
  }
  return out;
}

std::size_t evaluation_threads() {
  if (const char* env = std::getenv("GFM_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("GFM_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> score_pairs(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs,
                                std::size_t batch_size, std::size_t threads) {
  std::vector<double> scores(pairs.size(), 0.0);
  if (pairs.empty()) return scores;
  const auto batches = pad_and_batch(dataset, pairs, batch_size);
  if (threads == 0) threads = evaluation_threads();
  threads = std::min(threads, batches.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t b = next++; b < batches.size(); b = next++) {
      try {
        const auto out = model.predict(batches[b]);
        for (std::size_t k = 0; k < out.size(); ++k) scores[batches[b].pair_index[k]] = out[k];
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return scores;
}

double evaluation_loss(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs, Task task) {
  check_pairs(pairs, task, "evaluation");
  const auto scores = score_pairs(model, dataset, pairs);
  std::vector<double> targets;
  for (const auto& p : pairs) targets.push_back(dataset.target(p));
  const Tensor pred = column(scores), truth = column(targets);
  return (task == Task::kRegression ? ops::mse_loss(pred, truth) : ops::bce_loss(pred, truth)).item();
}

TrainResult train(const Dataset& dataset, const DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.empty()) throw ConfigError("training split is empty");
  check_pairs(split.train, config.task, "training");
  check_pairs(split.val, config.task, "validation");

  GfmModel model(feature_width(dataset.alphabet()), config.fusion, config.seed);
  Adam optimizer(model.trainable_parameters(), config.adam);
  TrainResult result{model, {}, 0};
  auto best = snapshot(model);
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.fusion.redraw_features) model.redraw_performer_features(derive_seed(config.seed, 0xFEA7 + epoch));
    const auto batches = pad_and_batch(dataset, split.train, config.batch_size, derive_seed(config.seed, epoch));
    double total = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      GradientTape tape;
      const Tensor pred = model.forward(batch, ops::Mode::kTrain);
      const Tensor truth = column(batch.targets);
      const Tensor loss =
          config.task == Task::kRegression ? ops::mse_loss(pred, truth) : ops::bce_loss(pred, truth);
      tape.backward(loss);
      optimizer.step();
      optimizer.zero_grad();
      total += loss.item() * static_cast<double>(batch.size);
      seen += batch.size;
    }
    EpochRecord record{epoch, total / static_cast<double>(seen), 0.0};
    record.val_loss = split.val.empty() ? record.train_loss : evaluation_loss(model, dataset, split.val, config.task);
    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      best = snapshot(model);
      result.best_epoch = epoch;
    }
    result.curve.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  result.model.load_state(best);
  return result;
}

std::string loss_curve_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
  return out.str();
}

std::string EvalReport::to_json(bool with_timing) const { return report_json(*this, with_timing).dump(2) + "\n"; }

EvalReport report_from_scores(Task task, const Dataset& dataset, std::span<const GraphPair> pairs,
                              std::span<const double> scores) {
  if (pairs.size() != scores.size()) throw std::invalid_argument("report_from_scores: score count mismatch");
  if (pairs.empty()) throw std::invalid_argument("report_from_scores: no pairs to evaluate");
  check_pairs(pairs, task, "evaluation");
  EvalReport r;
  r.task = task;
  r.pairs = pairs.size();
  std::vector<double> targets;
  for (const auto& p : pairs) targets.push_back(dataset.target(p));
  r.mse = metrics::mse(scores, targets);
  if (task == Task::kClassification) {
    std::vector<int> labels;
    for (const auto& p : pairs) labels.push_back(std::get<ClassLabel>(p.supervision).label);
    r.auc = metrics::auc(scores, labels);
    return r;
  }
  std::map<GraphId, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < pairs.size(); ++k) groups[pairs[k].i].push_back(k);
  double rho_sum = 0.0, p_sum = 0.0;
  std::size_t rho_count = 0, short_lists = 0, constant = 0;
  for (const auto& [query, members] : groups) {
    std::vector<double> pred, truth;
    std::vector<GraphId> ids;
    for (std::size_t k : members) {
      pred.push_back(scores[k]);
      truth.push_back(targets[k]);
      ids.push_back(pairs[k].j);
    }
    QueryMetrics q{query, members.size(), std::numeric_limits<double>::quiet_NaN(), 0.0};
    const bool flat = std::all_of(truth.begin(), truth.end(), [&](double t) { return t == truth.front(); });
    if (flat) {
      ++constant;
    } else {
      q.rho = metrics::spearman(pred, truth);
      rho_sum += q.rho;
      ++rho_count;
    }
    q.p_at_k = metrics::precision_at_k(pred, truth, ids, r.k);
    p_sum += q.p_at_k;
    if (members.size() < r.k) ++short_lists;
    r.per_query.push_back(q);
  }
  r.rho = rho_count ? rho_sum / static_cast<double>(rho_count) : 0.0;
  r.p_at_10 = p_sum / static_cast<double>(groups.size());
  if (short_lists) {
    r.warnings.push_back(std::to_string(short_lists) + " queries have fewer than " + std::to_string(r.k) +
                         " candidates; p@10 uses k = min(10, candidates) for them");
  }
  if (constant) {
    r.warnings.push_back(std::to_string(constant) + " queries have constant ground truth and are left out of rho");
  }
  return r;
}

EvalReport evaluate_with(const Scorer& scorer, Task task, const Dataset& dataset, std::span<const GraphPair> pairs) {
  const auto start = std::chrono::steady_clock::now();
  const auto scores = scorer(pairs);
  const double ms = elapsed_ms(start);
  EvalReport r = report_from_scores(task, dataset, pairs, scores);
  r.ms_per_pair = ms / static_cast<double>(pairs.size());
  return r;
}

EvalReport evaluate_regression(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs) {
  return evaluate_with([&](std::span<const GraphPair> ps) { return score_pairs(model, dataset, ps); },
                       Task::kRegression, dataset, pairs);
}

EvalReport evaluate_classification(const GfmModel& model, const Dataset& dataset, std::span<const GraphPair> pairs) {
  return evaluate_with([&](std::span<const GraphPair> ps) { return score_pairs(model, dataset, ps); },
                       Task::kClassification, dataset, pairs);
}

std::vector<RankedGraph> rank_query(const GfmModel& model, const Graph& query, std::span<const Graph> database,
                                    const std::vector<std::string>& alphabet, std::size_t k) {
  std::vector<RankedGraph> ranked;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < database.size(); start += kChunk) {
    std::vector<GraphPairRef> refs;
    for (std::size_t d = start; d < std::min(database.size(), start + kChunk); ++d)
      refs.push_back({&query, &database[d]});
    const auto scores = model.predict(make_batch(refs, alphabet));
    for (std::size_t n = 0; n < refs.size(); ++n) ranked.push_back({refs[n].second->id(), scores[n]});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedGraph& a, const RankedGraph& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

GfmModel with_fusion_config(const GfmModel& model, const FusionConfig& config) {
  if (config.performer_features != model.config().performer_features) {
    throw ConfigError("performer feature count differs from the checkpoint (" +
                      std::to_string(config.performer_features) + " vs " +
                      std::to_string(model.config().performer_features) + ")");
  }
  GfmModel out(model.feature_dim(), config, model.seed());
  out.load_state(model.state());
  return out;
}

std::vector<TimingRow> benchmark_runtime(const GfmModel& model, std::span<const std::size_t> sizes,
                                         std::size_t repetitions, std::uint64_t seed) {
  if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
  const std::size_t f0 = model.feature_dim();
  const auto alphabet = f0 > 1 ? synthetic_alphabet(f0) : std::vector<std::string>{};
  std::vector<TimingRow> rows;
  for (std::size_t n : sizes) {
    if (n == 0) throw ConfigError("benchmark sizes must be >= 1");
    std::mt19937_64 rng(derive_seed(seed, n));
    const Graph gi = random_connected_graph(rng, 0, n, alphabet);
    const Graph gj = random_connected_graph(rng, 1, n, alphabet);
    const std::array<GraphPairRef, 1> refs{GraphPairRef{&gi, &gj}};
    const PairBatch batch = make_batch(refs, alphabet);
    for (AttentionMode mode : {AttentionMode::kTransformer, AttentionMode::kPerformer}) {
      FusionConfig cfg = model.config();
      cfg.attention_mode = mode;
      const GfmModel m = with_fusion_config(model, cfg);
      for (int w = 0; w < 3; ++w) m.predict(batch);
      std::vector<double> times;
      for (std::size_t r = 0; r < repetitions; ++r) {
        const auto start = std::chrono::steady_clock::now();
        m.predict(batch);
        times.push_back(elapsed_ms(start));
      }
      std::sort(times.begin(), times.end());
      const std::size_t mid = times.size() / 2;
      const double median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
      rows.push_back({n, mode, median});
    }
  }
  return rows;
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << "n,mode,median_ms\n";
  for (const auto& r : rows) out << r.nodes << ',' << attention_mode_name(r.mode) << ',' << std::fixed << r.median_ms << '\n';
  return out.str();
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const DatasetSplit& split, const TrainConfig& base) {
  base.validate();
  std::vector<AblationRow> rows;
  auto variant = [&](const std::string& name, auto&& tweak) {
    TrainConfig cfg = base;
    tweak(cfg.fusion);
    cfg.validate();
    const TrainResult trained = train(dataset, split, cfg);
    const auto& pairs = split.test.empty() ? split.val : split.test;
    EvalReport report = base.task == Task::kRegression ? evaluate_regression(trained.model, dataset, pairs)
                                                       : evaluate_classification(trained.model, dataset, pairs);
    rows.push_back({name, cfg.fusion, std::move(report)});
  };
  variant("GFM", [](FusionConfig&) {});
  variant("w/o Graph Fusion", [](FusionConfig& f) { f.use_fusion = false; });
  variant("w/o Graph-sim", [](FusionConfig& f) { f.use_graph_sim = false; });
  variant("w/o Node-sim", [](FusionConfig& f) { f.use_node_sim = false; });
  return rows;
}

std::string ablation_json(const std::vector<AblationRow>& rows, const TrainConfig& base) {
  json j;
  j["task"] = task_name(base.task);
  j["seed"] = base.seed;
  j["epochs"] = base.epochs;
  json out = json::array();
  for (const auto& r : rows) {
    json row;
    row["name"] = r.name;
    row["config"] = json::parse(fusion_config_json(r.fusion));
    row["report"] = report_json(r.report, false);
    out.push_back(row);
  }
  j["rows"] = out;
  return j.dump(2) + "\n";
}

}  // namespace gfm
