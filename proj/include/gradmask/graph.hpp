#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gradmask {

enum class TaskKind { GraphClassification, GraphRegression, NodeClassification };

std::string to_string(TaskKind kind);  // graph_cls | graph_reg | node_cls
TaskKind task_kind_from_string(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::GraphClassification;
  std::size_t num_classes = 2;  // ignored for regression

  bool is_classification() const { return kind != TaskKind::GraphRegression; }
  bool is_graph_level() const { return kind != TaskKind::NodeClassification; }
  std::size_t output_dim() const { return is_classification() ? num_classes : 1; }
};

using Edge = std::pair<std::size_t, std::size_t>;
using GraphLabel = std::variant<std::size_t, double, std::vector<std::size_t>>;

/// Undirected simple graph with dense node features. Edges are stored once
/// with u < v, sorted, without duplicates or self-loops.
struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::size_t d_in = 0;
  std::vector<double> features;  // n x d_in, row-major
  GraphLabel label = std::size_t{0};

  /// Normalizes edge orientation, removes duplicates and validates.
  static Graph make(std::size_t n, std::vector<Edge> edges, std::size_t d_in, std::vector<double> features,
                    GraphLabel label);

  /// Throws ValidationError on out-of-range endpoints, self-loops,
  /// unnormalized edges or a feature block of the wrong size.
  void validate() const;

  std::vector<std::vector<std::size_t>> neighbors() const;
  std::vector<std::size_t> degrees() const;
  /// n x n, symmetric, zero diagonal.
  std::vector<std::uint8_t> adjacency() const;

  double feature(std::size_t node, std::size_t col) const { return features[node * d_in + col]; }

  bool operator==(const Graph&) const = default;
};

struct Dataset {
  TaskSpec task;
  std::size_t d_in = 0;
  std::vector<Graph> graphs;

  std::size_t size() const { return graphs.size(); }
  /// Checks every graph and label against the declared task and d_in.
  void validate() const;
  bool operator==(const Dataset& other) const;
};

/// JSON-lines format: one header object, then one graph object per line.
Dataset read_graph_dataset(std::istream& in);
Dataset load_graph_dataset(const std::string& path);
void write_graph_dataset(std::ostream& out, const Dataset& ds);
void save_graph_dataset(const std::string& path, const Dataset& ds);

/// 64-bit FNV-1a over the serialized dataset; keys derived caches.
std::uint64_t dataset_content_hash(const Dataset& ds);

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded 80/10/10 partition; the remainder goes to train.
DatasetSplit split_dataset(const Dataset& ds, std::uint64_t seed);
/// Seeded partition into explicit sizes; requires the sizes to sum to |ds|.
DatasetSplit split_dataset_counts(const Dataset& ds, std::size_t train, std::size_t val, std::size_t test,
                                  std::uint64_t seed);

/// Seeded uniform sample of ceil(fraction * |train|) graphs. Samples are
/// prefixes of one permutation, so smaller fractions nest in larger ones.
Dataset subsample_low_resource(const Dataset& train, double fraction, std::uint64_t seed);

/// Fraction of edges joining equally labelled endpoints.
double homophily_ratio(const Graph& g, const std::vector<std::size_t>& node_labels);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace gradmask
