#include "gfm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gfm/ged.hpp"
#include "json.hpp"

namespace gfm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw DatasetError("dataset field " + where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing key \"") + key + "\"");
  return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      fail(where, "unknown key \"" + key + "\"");
    }
  }
}

GraphId as_id(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer id");
  return v.get<GraphId>();
}

std::size_t as_index(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(where, "expected a non-negative integer");
  return v.get<std::size_t>();
}

json number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15) return json(static_cast<std::int64_t>(v));
  return json(v);
}

}  // namespace

Dataset::Dataset(std::vector<std::string> alphabet, std::vector<Graph> graphs, std::vector<GraphPair> pairs)
    : alphabet_(std::move(alphabet)), graphs_(std::move(graphs)), pairs_(std::move(pairs)) {
  for (const auto& g : graphs_)
    for (const auto& l : g.labels())
      if (!l.empty()) alphabet_.push_back(l);
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  std::sort(graphs_.begin(), graphs_.end(), [](const Graph& a, const Graph& b) { return a.id() < b.id(); });
  for (std::size_t k = 0; k < graphs_.size(); ++k) {
    if (!index_.emplace(graphs_[k].id(), k).second) {
      throw DatasetError("duplicate graph id " + std::to_string(graphs_[k].id()));
    }
  }
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    for (GraphId id : {pairs_[p].i, pairs_[p].j}) {
      if (!contains(id)) {
        throw DatasetError("pairs[" + std::to_string(p) + "]: unknown graph id " + std::to_string(id));
      }
    }
  }
}

const Graph& Dataset::graph(GraphId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DatasetError("unknown graph id " + std::to_string(id));
  return graphs_[it->second];
}

double Dataset::similarity(const GraphPair& pair) const {
  const auto* ged = std::get_if<GedLabel>(&pair.supervision);
  if (!ged) throw DatasetError("pair (" + std::to_string(pair.i) + "," + std::to_string(pair.j) + ") has no GED");
  return ged::nged_similarity(ged->ged, graph(pair.i).num_nodes(), graph(pair.j).num_nodes()).similarity;
}

double Dataset::target(const GraphPair& pair) const {
  if (const auto* c = std::get_if<ClassLabel>(&pair.supervision)) return c->label > 0 ? 1.0 : 0.0;
  return similarity(pair);
}

Dataset parse_dataset(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("<root>", "expected an object");
  reject_unknown(doc, {"alphabet", "graphs", "pairs"}, "<root>");

  std::vector<std::string> alphabet;
  if (doc.contains("alphabet")) {
    const auto& a = doc["alphabet"];
    if (!a.is_array()) fail("alphabet", "expected an array of strings");
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!a[k].is_string() || a[k].get<std::string>().empty()) {
        fail("alphabet[" + std::to_string(k) + "]", "expected a non-empty string");
      }
      alphabet.push_back(a[k].get<std::string>());
    }
  }
  const bool labeled_alphabet = !alphabet.empty();

  const auto& gs = require(doc, "graphs", "<root>");
  if (!gs.is_array()) fail("graphs", "expected an array");
  std::vector<Graph> graphs;
  std::set<std::string> seen_labels;
  bool any_labeled = false, any_unlabeled = false;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    const std::string where = "graphs[" + std::to_string(k) + "]";
    const auto& g = gs[k];
    if (!g.is_object()) fail(where, "expected an object");
    reject_unknown(g, {"id", "labels", "n", "edges"}, where);
    const GraphId id = as_id(require(g, "id", where), where + ".id");
    std::vector<std::string> labels;
    if (g.contains("labels")) {
      const auto& ls = g["labels"];
      if (!ls.is_array()) fail(where + ".labels", "expected an array of strings");
      for (std::size_t v = 0; v < ls.size(); ++v) {
        if (!ls[v].is_string() || ls[v].get<std::string>().empty()) {
          fail(where + ".labels[" + std::to_string(v) + "]", "expected a non-empty string");
        }
        labels.push_back(ls[v].get<std::string>());
        seen_labels.insert(labels.back());
      }
      if (g.contains("n") && as_index(g["n"], where + ".n") != labels.size()) {
        fail(where + ".n", "disagrees with the number of labels");
      }
      any_labeled = true;
    } else {
      if (!g.contains("n")) fail(where, "needs \"labels\" or \"n\"");
      labels.assign(as_index(g["n"], where + ".n"), std::string());
      any_unlabeled = true;
    }
    std::vector<Edge> edges;
    const auto& es = require(g, "edges", where);
    if (!es.is_array()) fail(where + ".edges", "expected an array of [u, v] pairs");
    for (std::size_t e = 0; e < es.size(); ++e) {
      const std::string ew = where + ".edges[" + std::to_string(e) + "]";
      if (!es[e].is_array() || es[e].size() != 2) fail(ew, "expected [u, v]");
      edges.emplace_back(as_index(es[e][0], ew), as_index(es[e][1], ew));
    }
    try {
      graphs.emplace_back(id, std::move(labels), std::move(edges));
    } catch (const GraphError& err) {
      fail(where, err.what());
    }
  }
  if (any_labeled && any_unlabeled) fail("graphs", "mixes labeled and unlabeled graphs");
  if (any_unlabeled && labeled_alphabet) fail("alphabet", "non-empty alphabet with unlabeled graphs");
  for (const auto& l : alphabet) seen_labels.insert(l);
  alphabet.assign(seen_labels.begin(), seen_labels.end());

  std::vector<GraphPair> pairs;
  if (doc.contains("pairs")) {
    const auto& ps = doc["pairs"];
    if (!ps.is_array()) fail("pairs", "expected an array");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::string where = "pairs[" + std::to_string(k) + "]";
      const auto& p = ps[k];
      if (!p.is_object()) fail(where, "expected an object");
      reject_unknown(p, {"i", "j", "ged", "label", "method", "similarity"}, where);
      GraphPair pair;
      pair.i = as_id(require(p, "i", where), where + ".i");
      pair.j = as_id(require(p, "j", where), where + ".j");
      if (p.contains("ged") && p.contains("label")) fail(where, "has both \"ged\" and \"label\"");
      if (p.contains("ged")) {
        const auto& gv = p["ged"];
        if (!gv.is_number() || gv.get<double>() < 0.0 || !std::isfinite(gv.get<double>())) {
          fail(where + ".ged", "expected a non-negative number");
        }
        GedLabel label{gv.get<double>(), {}};
        if (p.contains("method")) {
          if (!p["method"].is_string()) fail(where + ".method", "expected a string");
          label.method = p["method"].get<std::string>();
        }
        pair.supervision = label;
      } else if (p.contains("label")) {
        const auto& lv = p["label"];
        if (!lv.is_number_integer() || (lv.get<int>() != 1 && lv.get<int>() != -1)) {
          fail(where + ".label", "expected -1 or 1");
        }
        pair.supervision = ClassLabel{lv.get<int>()};
      }
      pairs.push_back(pair);
    }
  }
  try {
    return Dataset(std::move(alphabet), std::move(graphs), std::move(pairs));
  } catch (const DatasetError& err) {
    throw DatasetError(std::string("dataset field ") + err.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::ostringstream os;
  os << "{\n\"alphabet\": " << json(dataset.alphabet()).dump() << ",\n\"graphs\": [";
  const bool labeled = !dataset.alphabet().empty();
  const auto& graphs = dataset.graphs();
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto& g = graphs[k];
    json edges = json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    json obj = {{"edges", edges}, {"id", g.id()}};
    if (labeled) {
      obj["labels"] = g.labels();
    } else {
      obj["n"] = g.num_nodes();
    }
    os << (k ? ",\n  " : "\n  ") << obj.dump();
  }
  os << "\n],\n\"pairs\": [";
  const auto& pairs = dataset.pairs();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    json obj = {{"i", p.i}, {"j", p.j}};
    if (const auto* g = std::get_if<GedLabel>(&p.supervision)) {
      obj["ged"] = number(g->ged);
      if (!g->method.empty()) obj["method"] = g->method;
      obj["similarity"] = dataset.similarity(p);
    } else if (const auto* c = std::get_if<ClassLabel>(&p.supervision)) {
      obj["label"] = c->label;
    }
    os << (k ? ",\n  " : "\n  ") << obj.dump();
  }
  os << "\n]\n}\n";
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_dataset(dataset));
}

}  // namespace gfm
