#include "gradmask/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gradmask/errors.hpp"
#include "gradmask/rng.hpp"
#include "json.hpp"

namespace gradmask {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "gradmask-graphs";
constexpr int kFormatVersion = 1;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, std::size_t line) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ParseError(line, "unknown key \"" + key + "\"");
    }
  }
}

const json& require_key(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(line, std::string("missing key \"") + key + "\"");
  return *it;
}

std::size_t as_index(const json& v, std::size_t line, const char* what) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError(line, std::string(what) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void check_label(const Graph& g, const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::GraphClassification: {
      const auto* y = std::get_if<std::size_t>(&g.label);
      if (!y) throw ValidationError("graph classification requires an integer label");
      if (*y >= task.num_classes) throw ValidationError("class label " + std::to_string(*y) + " out of range");
      break;
    }
    case TaskKind::GraphRegression: {
      const auto* y = std::get_if<double>(&g.label);
      if (!y || !std::isfinite(*y)) throw ValidationError("graph regression requires a finite real label");
      break;
    }
    case TaskKind::NodeClassification: {
      const auto* y = std::get_if<std::vector<std::size_t>>(&g.label);
      if (!y || y->size() != g.n) throw ValidationError("node classification requires one label per node");
      for (std::size_t c : *y) {
        if (c >= task.num_classes) throw ValidationError("node label " + std::to_string(c) + " out of range");
      }
      break;
    }
  }
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::GraphClassification:
      return "graph_cls";
    case TaskKind::GraphRegression:
      return "graph_reg";
    case TaskKind::NodeClassification:
      return "node_cls";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "graph_cls") return TaskKind::GraphClassification;
  if (name == "graph_reg") return TaskKind::GraphRegression;
  if (name == "node_cls") return TaskKind::NodeClassification;
  throw SchemaError("unknown task kind \"" + name + "\"");
}

Graph Graph::make(std::size_t n, std::vector<Edge> edges, std::size_t d_in, std::vector<double> features,
                  GraphLabel label) {
  Graph g;
  g.n = n;
  g.d_in = d_in;
  g.features = std::move(features);
  g.label = std::move(label);
  for (auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw ValidationError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") out of range for n=" +
                            std::to_string(n));
    }
    if (u == v) throw ValidationError("self-loop on node " + std::to_string(u));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.validate();
  return g;
}

void Graph::validate() const {
  if (n == 0) throw ValidationError("graph has no nodes");
  if (features.size() != n * d_in) {
    throw ValidationError("feature block has " + std::to_string(features.size()) + " values, expected " +
                          std::to_string(n * d_in));
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [u, v] = edges[i];
    if (u >= n || v >= n) throw ValidationError("edge endpoint out of range");
    if (u >= v) throw ValidationError("edge not normalized or self-loop");
    if (i > 0 && edges[i - 1] >= edges[i]) throw ValidationError("edges not sorted/deduplicated");
  }
  for (double f : features) {
    if (!std::isfinite(f)) throw ValidationError("non-finite node feature");
  }
}

std::vector<std::vector<std::size_t>> Graph::neighbors() const {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(n, 0);
  for (const auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

std::vector<std::uint8_t> Graph::adjacency() const {
  std::vector<std::uint8_t> a(n * n, 0);
  for (const auto& [u, v] : edges) {
    a[u * n + v] = 1;
    a[v * n + u] = 1;
  }
  return a;
}

void Dataset::validate() const {
  if (task.is_classification() && task.num_classes < 2) throw SchemaError("classification needs num_classes >= 2");
  for (const auto& g : graphs) {
    if (g.d_in != d_in) {
      throw SchemaError("graph has d_in=" + std::to_string(g.d_in) + " but dataset declares " + std::to_string(d_in));
    }
    g.validate();
    check_label(g, task);
  }
}

bool Dataset::operator==(const Dataset& other) const {
  return task.kind == other.task.kind &&
         (!task.is_classification() || task.num_classes == other.task.num_classes) && d_in == other.d_in &&
         graphs == other.graphs;
}

Dataset read_graph_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool declared_classes = false;
  std::size_t max_class = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') throw ParseError(lineno, "CR line endings are not accepted");
    if (line.empty()) throw ParseError(lineno, "empty line");
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(lineno, "expected a JSON object");

    if (!have_header) {
      reject_unknown_keys(obj, {"format", "version", "task", "d_in", "num_classes"}, lineno);
      const auto& fmt = require_key(obj, "format", lineno);
      if (!fmt.is_string() || fmt.get<std::string>() != kFormatName) throw ParseError(lineno, "not a gradmask-graphs file");
      const auto& ver = require_key(obj, "version", lineno);
      if (!ver.is_number_integer() || ver.get<int>() != kFormatVersion) {
        throw ParseError(lineno, "unsupported format version");
      }
      const auto& task = require_key(obj, "task", lineno);
      if (!task.is_string()) throw ParseError(lineno, "task must be a string");
      try {
        ds.task.kind = task_kind_from_string(task.get<std::string>());
      } catch (const SchemaError& e) {
        throw ParseError(lineno, e.what());
      }
      ds.d_in = as_index(require_key(obj, "d_in", lineno), lineno, "d_in");
      if (auto it = obj.find("num_classes"); it != obj.end()) {
        if (!ds.task.is_classification()) throw ParseError(lineno, "num_classes given for a regression task");
        ds.task.num_classes = as_index(*it, lineno, "num_classes");
        declared_classes = true;
      }
      have_header = true;
      continue;
    }

    reject_unknown_keys(obj, {"n", "edges", "x", "y"}, lineno);
    const std::size_t n = as_index(require_key(obj, "n", lineno), lineno, "n");
    const auto& jedges = require_key(obj, "edges", lineno);
    const auto& jx = require_key(obj, "x", lineno);
    const auto& jy = require_key(obj, "y", lineno);
    if (!jedges.is_array() || !jx.is_array()) throw ParseError(lineno, "edges and x must be arrays");

    std::vector<Edge> edges;
    for (const auto& e : jedges) {
      if (!e.is_array() || e.size() != 2) throw ParseError(lineno, "edge must be a [u, v] pair");
      edges.emplace_back(as_index(e[0], lineno, "edge endpoint"), as_index(e[1], lineno, "edge endpoint"));
    }
    if (jx.size() != n) throw ParseError(lineno, "x must have n rows");
    std::vector<double> features;
    features.reserve(n * ds.d_in);
    for (const auto& row : jx) {
      if (!row.is_array()) throw ParseError(lineno, "feature row must be an array");
      if (row.size() != ds.d_in) {
        throw SchemaError("line " + std::to_string(lineno) + ": feature row has " + std::to_string(row.size()) +
                          " entries but d_in=" + std::to_string(ds.d_in));
      }
      for (const auto& v : row) {
        if (!v.is_number()) throw ParseError(lineno, "feature must be numeric");
        features.push_back(v.get<double>());
      }
    }

    GraphLabel label;
    switch (ds.task.kind) {
      case TaskKind::GraphClassification:
        label = as_index(jy, lineno, "y");
        max_class = std::max(max_class, std::get<std::size_t>(label));
        break;
      case TaskKind::GraphRegression:
        if (!jy.is_number()) throw ParseError(lineno, "y must be a number for graph_reg");
        label = jy.get<double>();
        break;
      case TaskKind::NodeClassification: {
        if (!jy.is_array()) throw ParseError(lineno, "y must be an array for node_cls");
        std::vector<std::size_t> ys;
        for (const auto& v : jy) {
          ys.push_back(as_index(v, lineno, "node label"));
          max_class = std::max(max_class, ys.back());
        }
        label = std::move(ys);
        break;
      }
    }
    try {
      ds.graphs.push_back(Graph::make(n, std::move(edges), ds.d_in, std::move(features), std::move(label)));
    } catch (const SchemaError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(lineno + 1, "missing header line");
  if (ds.task.is_classification() && !declared_classes) ds.task.num_classes = std::max<std::size_t>(2, max_class + 1);
  try {
    ds.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("dataset: ") + e.what());
  }
  return ds;
}

Dataset load_graph_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset file " + path);
  return read_graph_dataset(in);
}

void write_graph_dataset(std::ostream& out, const Dataset& ds) {
  json header = {{"format", kFormatName}, {"version", kFormatVersion}, {"task", to_string(ds.task.kind)},
                 {"d_in", ds.d_in}};
  if (ds.task.is_classification()) header["num_classes"] = ds.task.num_classes;
  out << header.dump() << '\n';
  for (const auto& g : ds.graphs) {
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back({u, v});
    json x = json::array();
    for (std::size_t i = 0; i < g.n; ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < g.d_in; ++j) row.push_back(g.feature(i, j));
      x.push_back(std::move(row));
    }
    json obj = {{"n", g.n}, {"edges", std::move(edges)}, {"x", std::move(x)}};
    std::visit([&](const auto& y) { obj["y"] = y; }, g.label);
    out << obj.dump() << '\n';
  }
}

void save_graph_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write dataset file " + path);
  write_graph_dataset(out, ds);
}

std::uint64_t dataset_content_hash(const Dataset& ds) {
  std::ostringstream os;
  write_graph_dataset(os, ds);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.task = ds.task;
  out.d_in = ds.d_in;
  out.graphs.reserve(indices.size());
  for (std::size_t i : indices) out.graphs.push_back(ds.graphs.at(i));
  return out;
}

DatasetSplit split_dataset(const Dataset& ds, std::uint64_t seed) {
  if (ds.size() < 10) throw ParameterError("split_dataset needs at least 10 graphs, got " + std::to_string(ds.size()));
  const std::size_t n_val = ds.size() / 10;
  const std::size_t n_test = ds.size() / 10;
  return split_dataset_counts(ds, ds.size() - n_val - n_test, n_val, n_test, seed);
}

DatasetSplit split_dataset_counts(const Dataset& ds, std::size_t train, std::size_t val, std::size_t test,
                                  std::uint64_t seed) {
  if (train + val + test != ds.size()) {
    throw ParameterError("split sizes " + std::to_string(train) + "/" + std::to_string(val) + "/" +
                         std::to_string(test) + " do not sum to dataset size " + std::to_string(ds.size()));
  }
  if (train == 0 || val == 0 || test == 0) throw ParameterError("every split must be non-empty");
  SplitMix64 rng(seed);
  const auto perm = random_permutation(ds.size(), rng);
  std::vector<std::size_t> tr(perm.begin(), perm.begin() + train);
  std::vector<std::size_t> va(perm.begin() + train, perm.begin() + train + val);
  std::vector<std::size_t> te(perm.begin() + train + val, perm.end());
  return {subset(ds, tr), subset(ds, va), subset(ds, te)};
}

Dataset subsample_low_resource(const Dataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("low-resource fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  // Guard against 0.1 * 500 = 50.000000000000007 rounding up.
  const double raw = fraction * static_cast<double>(train.size());
  const auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  SplitMix64 rng(seed);
  const auto perm = random_permutation(train.size(), rng);
  std::vector<std::size_t> idx(perm.begin(), perm.begin() + std::min(keep, train.size()));
  return subset(train, idx);
}

double homophily_ratio(const Graph& g, const std::vector<std::size_t>& node_labels) {
  if (node_labels.size() != g.n) throw ParameterError("homophily_ratio: need one label per node");
  if (g.edges.empty()) throw DomainError("homophily ratio is undefined for a graph without edges");
  std::size_t same = 0;
  for (const auto& [u, v] : g.edges) same += node_labels[u] == node_labels[v] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

}  // namespace gradmask
