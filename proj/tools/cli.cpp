#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gfm/ged.hpp"
#include "gfm/synthetic.hpp"
#include "json.hpp"

namespace gfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config

void reject_unknown(const json& obj, const std::vector<std::string>& keys, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw UsageError("unknown config key '" + where + k + "'");
    }
  }
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) throw UsageError("config key '" + where + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw UsageError("config key '" + where + key + "' must be a number");
  return v.get<double>();
}

bool get_flag(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw UsageError("config key '" + where + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_text(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw UsageError("config key '" + where + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  reject_unknown(doc,
                 {"task", "data", "out_dir", "epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps",
                  "seed", "split", "fusion", "ablation"},
                 "");

  Task task = Task::kRegression;
  if (doc.contains("task")) {
    try {
      task = parse_task(get_text(doc, "task", ""));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("config key 'task': ") + e.what());
    }
  }
  ExperimentConfig c;
  c.train = TrainConfig::defaults(task);
  if (!doc.contains("data")) throw UsageError("config key 'data' is required");
  if (!doc.contains("out_dir")) throw UsageError("config key 'out_dir' is required");
  c.data = get_text(doc, "data", "");
  c.out_dir = get_text(doc, "out_dir", "");
  if (doc.contains("epochs")) c.train.epochs = get_count(doc, "epochs", "");
  if (doc.contains("batch_size")) c.train.batch_size = get_count(doc, "batch_size", "");
  if (doc.contains("learning_rate")) c.train.adam.learning_rate = get_real(doc, "learning_rate", "");
  if (doc.contains("beta1")) c.train.adam.beta1 = get_real(doc, "beta1", "");
  if (doc.contains("beta2")) c.train.adam.beta2 = get_real(doc, "beta2", "");
  if (doc.contains("adam_eps")) c.train.adam.eps = get_real(doc, "adam_eps", "");
  if (doc.contains("seed")) c.train.seed = get_count(doc, "seed", "");
  if (doc.contains("ablation")) c.ablation = get_flag(doc, "ablation", "");

  if (doc.contains("split")) {
    const auto& s = doc["split"];
    if (!s.is_object()) throw UsageError("config key 'split' must be an object");
    reject_unknown(s, {"train", "val", "test"}, "split.");
    if (s.contains("train")) c.train.split.train = get_real(s, "train", "split.");
    if (s.contains("val")) c.train.split.val = get_real(s, "val", "split.");
    if (s.contains("test")) c.train.split.test = get_real(s, "test", "split.");
  }
  if (doc.contains("fusion")) {
    const auto& f = doc["fusion"];
    if (!f.is_object()) throw UsageError("config key 'fusion' must be an object");
    reject_unknown(f,
                   {"attention_mode", "performer_features", "redraw_features", "use_fusion", "use_graph_sim",
                    "use_node_sim"},
                   "fusion.");
    auto& fc = c.train.fusion;
    if (f.contains("attention_mode")) {
      try {
        fc.attention_mode = parse_attention_mode(get_text(f, "attention_mode", "fusion."));
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("config key 'fusion.attention_mode': ") + e.what());
      }
    }
    if (f.contains("performer_features")) fc.performer_features = get_count(f, "performer_features", "fusion.");
    if (f.contains("redraw_features")) fc.redraw_features = get_flag(f, "redraw_features", "fusion.");
    if (f.contains("use_fusion")) fc.use_fusion = get_flag(f, "use_fusion", "fusion.");
    if (f.contains("use_graph_sim")) fc.use_graph_sim = get_flag(f, "use_graph_sim", "fusion.");
    if (f.contains("use_node_sim")) fc.use_node_sim = get_flag(f, "use_node_sim", "fusion.");
  }
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  json j;
  j["task"] = task_name(t.task);
  j["data"] = c.data;
  j["out_dir"] = c.out_dir;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.adam.learning_rate;
  j["beta1"] = t.adam.beta1;
  j["beta2"] = t.adam.beta2;
  j["adam_eps"] = t.adam.eps;
  j["seed"] = t.seed;
  j["split"] = {{"train", t.split.train}, {"val", t.split.val}, {"test", t.split.test}};
  j["fusion"] = json::parse(fusion_config_json(t.fusion));
  j["ablation"] = c.ablation;
  return j.dump(2) + "\n";
}

namespace {

// ---------------------------------------------------------------------------
// helpers

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) {
      throw UsageError("--nodes expects MIN:MAX, got '" + text + "'");
    }
    return v;
  };
  if (colon == std::string::npos) throw UsageError("--nodes expects MIN:MAX, got '" + text + "'");
  const std::string_view all(text);
  const std::size_t lo = number(all.substr(0, colon)), hi = number(all.substr(colon + 1));
  if (lo == 0 || lo > hi) throw UsageError("--nodes needs 1 <= MIN <= MAX, got '" + text + "'");
  return {lo, hi};
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit(const std::string& contents, const std::string& out_path, std::ostream& out) {
  if (out_path.empty() || out_path == "-") {
    out << contents;
  } else {
    write_file_atomic(out_path, contents);
  }
}

struct LabelPlan {
  bool exact = false;
  std::vector<ged::MethodSpec> methods;
  std::string name;
};

LabelPlan parse_label_method(const std::string& text) {
  LabelPlan plan;
  try {
    if (text.rfind("min:", 0) == 0) {
      std::stringstream ss(text.substr(4));
      std::string part;
      while (std::getline(ss, part, ',')) plan.methods.push_back(ged::parse_method(part));
      if (plan.methods.empty()) throw UsageError("--method min: needs at least one method");
      plan.name = "min:";
      for (std::size_t k = 0; k < plan.methods.size(); ++k) {
        if (k) plan.name += ",";
        plan.name += ged::method_spec_name(plan.methods[k]);
      }
      return plan;
    }
    const auto spec = ged::parse_method(text);
    plan.exact = spec.method == ged::Method::kExactAStar;
    plan.methods = {spec};
    plan.name = ged::method_spec_name(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--method: ") + e.what());
  }
  return plan;
}

GedLabel label_pair(const Graph& g1, const Graph& g2, const LabelPlan& plan, bool allow_oversize) {
  if (plan.exact) {
    ged::SearchOptions options;
    options.allow_oversize = allow_oversize;
    try {
      return {ged::astar_ged(g1, g2, {}, options).distance, plan.name};
    } catch (const ged::SizeLimitError&) {
      if (allow_oversize) throw;
    }
    const std::vector<ged::MethodSpec> fallback{ged::MethodSpec::beam(10), ged::MethodSpec::bipartite()};
    return {ged::min_label(g1, g2, fallback).distance, "min:beam:10,bipartite"};
  }
  if (plan.methods.size() == 1 && plan.name.rfind("min:", 0) != 0) {
    return {ged::run_method(g1, g2, plan.methods.front()).distance, plan.name};
  }
  return {ged::min_label(g1, g2, plan.methods).distance, plan.name};
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t threads = std::max<std::size_t>(1, std::min(evaluation_threads(), n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::exception_ptr failure;
  std::mutex lock;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < n; k += threads) fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> g(lock);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Task infer_task(const Dataset& dataset) {
  std::size_t ged = 0, cls = 0;
  for (const auto& p : dataset.pairs()) {
    ged += p.has_ged();
    cls += p.has_class();
  }
  if (ged == 0 && cls == 0) throw UsageError("dataset has no labelled pairs");
  return cls > ged ? Task::kClassification : Task::kRegression;
}

std::vector<GraphPair> select_split(const Dataset& dataset, Task task, const SplitRatios& ratios,
                                    std::uint64_t seed, const std::string& which) {
  if (which == "all") {
    std::vector<GraphPair> out;
    for (const auto& p : dataset.pairs())
      if (task == Task::kRegression ? p.has_ged() : p.has_class()) out.push_back(p);
    return out;
  }
  auto split = split_dataset(dataset, task, ratios, seed);
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  return split.test;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t v = 0;
    const auto r = std::from_chars(part.data(), part.data() + part.size(), v);
    if (r.ec != std::errc() || r.ptr != part.data() + part.size() || part.empty() || v == 0) {
      throw UsageError("--sizes expects a comma-separated list of positive integers, got '" + text + "'");
    }
    sizes.push_back(v);
  }
  if (sizes.empty()) throw UsageError("--sizes must not be empty");
  return sizes;
}

// ---------------------------------------------------------------------------
// commands

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::size_t count = 10;
  std::string nodes = "5:10";
  std::size_t alphabet = 4;
  std::size_t edits = 4;
  std::size_t family_size = 2;
  std::size_t cross_pairs = 0;
  std::string task = "regression";
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const auto [lo, hi] = parse_range(a.nodes);
  if (a.alphabet > 26) throw UsageError("--alphabet must be at most 26");
  if (a.count == 0) throw UsageError("--count must be >= 1");
  SyntheticConfig g;
  g.seed = a.seed;
  g.min_nodes = lo;
  g.max_nodes = hi;
  g.alphabet_size = a.alphabet;
  g.max_edits = a.edits;
  Task task;
  try {
    task = parse_task(a.task);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--task: ") + e.what());
  }
  Dataset ds;
  if (task == Task::kClassification) {
    ds = generate_classification_dataset(g, a.count);
  } else {
    if (a.family_size < 2) throw UsageError("--family-size must be >= 2");
    FamilyConfig f;
    f.graphs = g;
    f.families = a.count;
    f.family_size = a.family_size;
    f.cross_pairs = a.cross_pairs;
    ds = generate_family_dataset(f);
  }
  emit(serialize_dataset(ds), a.out, out);
  return 0;
}

struct LabelArgs {
  std::string in, method = "astar", out;
  bool allow_oversize = false;
};

int cmd_label(const LabelArgs& a, std::ostream& out) {
  const auto plan = parse_label_method(a.method);
  Dataset ds = load_dataset(a.in);
  auto& pairs = ds.mutable_pairs();
  std::vector<GedLabel> labels(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    labels[k] = label_pair(ds.graph(pairs[k].i), ds.graph(pairs[k].j), plan, a.allow_oversize);
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) pairs[k].supervision = labels[k];
  emit(serialize_dataset(ds), a.out, out);
  return 0;
}

int cmd_train(const std::string& config_path, std::ostream& err) {
  const auto cfg = load_experiment_config(config_path);
  const fs::path base = fs::path(config_path).parent_path();
  const fs::path data = base / cfg.data, out_dir = base / cfg.out_dir;
  const Dataset ds = load_dataset(data);
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.json", experiment_config_json(cfg));

  const auto split = split_dataset(ds, cfg.train.task, cfg.train.split, cfg.train.seed);
  auto result = train(ds, split, cfg.train, [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_loss " << format_real(r.train_loss) << " val_loss "
        << format_real(r.val_loss) << "\n";
  });
  save_checkpoint(result.model, out_dir / "model.json");
  write_file_atomic(out_dir / "loss_curve.csv", loss_curve_csv(result.curve));
  const auto report = cfg.train.task == Task::kRegression
                          ? evaluate_regression(result.model, ds, split.test)
                          : evaluate_classification(result.model, ds, split.test);
  write_file_atomic(out_dir / "report.json", report.to_json(false));
  if (cfg.ablation) {
    const auto rows = run_ablation(ds, split, cfg.train);
    write_file_atomic(out_dir / "ablation.json", ablation_json(rows, cfg.train));
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, split = "test", task, config, out;
  std::optional<std::uint64_t> seed;
  bool timing = false;
  bool truth_scorer = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.split != "train" && a.split != "val" && a.split != "test" && a.split != "all") {
    throw UsageError("--split must be one of train, val, test, all");
  }
  const Dataset ds = load_dataset(a.data);
  Task task;
  SplitRatios ratios;
  std::optional<std::uint64_t> seed = a.seed;
  if (!a.config.empty()) {
    const auto cfg = load_experiment_config(a.config);
    task = cfg.train.task;
    ratios = cfg.train.split;
    if (!seed) seed = cfg.train.seed;
  } else {
    try {
      task = a.task.empty() ? infer_task(ds) : parse_task(a.task);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--task: ") + e.what());
    }
    ratios = TrainConfig::defaults(task).split;
  }

  EvalReport report;
  if (a.truth_scorer) {
    const auto pairs = select_split(ds, task, ratios, seed.value_or(0), a.split);
    const Scorer truth = [&](std::span<const GraphPair> ps) {
      std::vector<double> s;
      for (const auto& p : ps) s.push_back(ds.target(p));
      return s;
    };
    report = evaluate_with(truth, task, ds, pairs);
  } else {
    const GfmModel model = load_checkpoint(a.ckpt);
    const auto pairs = select_split(ds, task, ratios, seed.value_or(model.seed()), a.split);
    report = task == Task::kRegression ? evaluate_regression(model, ds, pairs)
                                       : evaluate_classification(model, ds, pairs);
  }
  emit(report.to_json(a.timing), a.out, out);
  return 0;
}

struct SearchArgs {
  std::string ckpt, data, out;
  GraphId query = 0;
  std::size_t k = 6;
  bool include_query = false;
};

int cmd_search(const SearchArgs& a, std::ostream& out) {
  if (a.k == 0) throw UsageError("--k must be >= 1");
  const Dataset ds = load_dataset(a.data);
  if (!ds.contains(a.query)) throw UsageError("--query-id " + std::to_string(a.query) + " is not in the dataset");
  const GfmModel model = load_checkpoint(a.ckpt);
  std::vector<Graph> db;
  for (const auto& g : ds.graphs())
    if (a.include_query || g.id() != a.query) db.push_back(g);
  const auto ranked = rank_query(model, ds.graph(a.query), db, ds.alphabet(), a.k);
  std::string csv = "rank,id,score\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    csv += std::to_string(r + 1) + "," + std::to_string(ranked[r].id) + "," + format_real(ranked[r].score) + "\n";
  }
  emit(csv, a.out, out);
  return 0;
}

struct BenchArgs {
  std::string ckpt, sizes = "64,128,256", out;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const auto sizes = parse_sizes(a.sizes);
  if (a.repetitions == 0) throw UsageError("--repetitions must be >= 1");
  const GfmModel model = load_checkpoint(a.ckpt);
  emit(timing_csv(benchmark_runtime(model, sizes, a.repetitions, a.seed)), a.out, out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph similarity learning with graph fusion", "gfm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gfm 1.0.0");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset with unlabelled pairs");
  generate->add_option("--seed", gen.seed, "Root seed");
  generate->add_option("--count", gen.count, "Number of families (pairs when --family-size is 2) or class pairs");
  generate->add_option("--nodes", gen.nodes, "Node count range MIN:MAX");
  generate->add_option("--alphabet", gen.alphabet, "Number of node labels (0 = unlabelled)");
  generate->add_option("--edits", gen.edits, "Largest number of edits between related graphs");
  generate->add_option("--family-size", gen.family_size, "Graphs per family");
  generate->add_option("--cross-pairs", gen.cross_pairs, "Extra pairs from each graph to other families");
  generate->add_option("--task", gen.task, "regression or classification");
  generate->add_option("--out", gen.out, "Output dataset path")->required();

  LabelArgs lab;
  auto* label = app.add_subcommand("label", "Fill every pair's GED");
  label->add_option("--in", lab.in, "Input dataset")->required();
  label->add_option("--method", lab.method, "astar, beam:W, bipartite, hed or min:LIST");
  label->add_option("--out", lab.out, "Output dataset path")->required();
  label->add_flag("--allow-oversize", lab.allow_oversize, "Run exact search beyond the 20-node combined cap");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a model from an experiment config");
  train_cmd->add_option("--config", train_config, "Experiment config JSON")->required();

  EvalArgs ev;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint manifest");
  eval->add_option("--data", ev.data, "Dataset")->required();
  eval->add_option("--split", ev.split, "train, val, test or all");
  eval->add_option("--task", ev.task, "regression or classification (default: from the labels)");
  eval->add_option("--config", ev.config, "Experiment config providing task, split ratios and seed");
  auto* seed_opt = eval->add_option("--seed", eval_seed, "Split seed (default: the checkpoint's seed)");
  eval->add_option("--out", ev.out, "Report path (default: stdout)");
  eval->add_flag("--timing", ev.timing, "Include ms_per_pair in the report");
  eval->add_flag("--truth-scorer", ev.truth_scorer)->group("");

  SearchArgs se;
  auto* search = app.add_subcommand("search", "Rank database graphs against a query graph");
  search->add_option("--ckpt", se.ckpt, "Checkpoint manifest")->required();
  search->add_option("--data", se.data, "Dataset whose graphs form the database")->required();
  search->add_option("--query-id", se.query, "Query graph id")->required();
  search->add_option("--k", se.k, "Number of rows");
  search->add_option("--out", se.out, "Listing path (default: stdout)");
  search->add_flag("--include-query", se.include_query, "Keep the query graph in the database");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Per-pair latency of both attention modes");
  bench->add_option("--ckpt", be.ckpt, "Checkpoint manifest")->required();
  bench->add_option("--sizes", be.sizes, "Comma-separated node counts");
  bench->add_option("--repetitions", be.repetitions, "Timed calls per size and mode");
  bench->add_option("--seed", be.seed, "Seed for the benchmark graphs");
  bench->add_option("--out", be.out, "CSV path (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "gfm 1.0.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "gfm: " << e.what() << "\n";
    return 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (label->parsed()) return cmd_label(lab, out);
    if (train_cmd->parsed()) return cmd_train(train_config, err);
    if (eval->parsed()) {
      if (seed_opt->count() > 0) ev.seed = eval_seed;
      if (ev.ckpt.empty() && !ev.truth_scorer) throw UsageError("--ckpt is required");
      return cmd_eval(ev, out);
    }
    if (search->parsed()) return cmd_search(se, out);
    if (bench->parsed()) return cmd_bench(be, out);
  } catch (const UsageError& e) {
    err << "gfm: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "gfm: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "gfm: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace gfm::cli
