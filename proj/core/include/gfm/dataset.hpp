#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "gfm/graph.hpp"

namespace gfm {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Distance supervision; `method` records which GED routine produced it.
struct GedLabel {
  double ged = 0.0;
  std::string method;
};

/// Binary supervision in {-1, +1}.
struct ClassLabel {
  int label = 1;
};

using Supervision = std::variant<std::monostate, GedLabel, ClassLabel>;

struct GraphPair {
  GraphId i = 0;
  GraphId j = 0;
  Supervision supervision;

  bool has_ged() const { return std::holds_alternative<GedLabel>(supervision); }
  bool has_class() const { return std::holds_alternative<ClassLabel>(supervision); }
  bool is_unlabeled() const { return std::holds_alternative<std::monostate>(supervision); }
};

/// Graphs (sorted by id), their label alphabet (grown to cover every graph
/// label) and supervised pairs.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> alphabet, std::vector<Graph> graphs, std::vector<GraphPair> pairs);

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::vector<Graph>& graphs() const { return graphs_; }
  const std::vector<GraphPair>& pairs() const { return pairs_; }
  std::vector<GraphPair>& mutable_pairs() { return pairs_; }

  bool contains(GraphId id) const { return index_.count(id) != 0; }
  const Graph& graph(GraphId id) const;

  /// exp(-nGED) for a GED-labelled pair.
  double similarity(const GraphPair& pair) const;

  /// Supervision target: similarity for GED pairs, {0,1} for class pairs.
  double target(const GraphPair& pair) const;

 private:
  std::vector<std::string> alphabet_;
  std::vector<Graph> graphs_;
  std::vector<GraphPair> pairs_;
  std::unordered_map<GraphId, std::size_t> index_;
};

Dataset parse_dataset(const std::string& text);
Dataset load_dataset(const std::filesystem::path& path);

/// Canonical serialisation: keys in lexicographic order, graphs by id, edges
/// sorted, one graph or pair per line.
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace gfm
