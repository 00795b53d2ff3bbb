#include "gradmask/synthetic.hpp"

#include <algorithm>

#include "gradmask/errors.hpp"
#include "gradmask/rng.hpp"
#include "gradmask/structural_index.hpp"

namespace gradmask {

namespace {

constexpr std::size_t kMaxRejections = 10000;

void check_spec(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ParameterError("synthetic count must be >= 1");
  if (spec.n_min < 1 || spec.n_min > spec.n_max) throw ParameterError("synthetic node range is empty");
  if (!(spec.p_edge >= 0.0 && spec.p_edge <= 1.0)) throw ParameterError("p_edge must lie in [0, 1]");
  if (spec.d_in < 1) throw ParameterError("d_in must be >= 1");
}

std::vector<Edge> erdos_renyi(std::size_t n, double p, SplitMix64& rng) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  return edges;
}

std::size_t draw_size(const SyntheticSpec& spec, SplitMix64& rng) {
  return spec.n_min + rng.below(spec.n_max - spec.n_min + 1);
}

Dataset shuffled(Dataset ds, SplitMix64& rng) {
  const auto perm = random_permutation(ds.size(), rng);
  return subset(ds, perm);
}

}  // namespace

bool has_triangle(const Graph& g) {
  const auto adj = g.neighbors();
  for (const auto& [u, v] : g.edges) {
    auto a = adj[u].begin(), b = adj[v].begin();
    while (a != adj[u].end() && b != adj[v].end()) {
      if (*a == *b) return true;
      if (*a < *b) {
        ++a;
      } else {
        ++b;
      }
    }
  }
  return false;
}

std::vector<std::size_t> triangle_membership(const Graph& g) {
  const auto adj = g.neighbors();
  std::vector<std::size_t> in(g.n, 0);
  for (const auto& [u, v] : g.edges) {
    for (std::size_t w : adj[u]) {
      if (std::binary_search(adj[v].begin(), adj[v].end(), w)) {
        in[u] = in[v] = in[w] = 1;
      }
    }
  }
  return in;
}

double average_shortest_path_length(const Graph& g) {
  const auto hops = shortest_path_hops(g);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = i + 1; j < g.n; ++j)
      if (hops.finite(i, j)) {
        total += hops.at(i, j);
        ++pairs;
      }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

std::vector<double> degree_one_hot(std::size_t n, const std::vector<Edge>& edges, std::size_t d_in) {
  std::vector<std::size_t> deg(n, 0);
  for (const auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  std::vector<double> x(n * d_in, 0.0);
  for (std::size_t i = 0; i < n; ++i) x[i * d_in + std::min(deg[i], d_in - 1)] = 1.0;
  return x;
}

Dataset synth_triangle_task(const SyntheticSpec& spec) {
  check_spec(spec);
  SplitMix64 rng(spec.seed);
  Dataset ds;
  ds.task = {TaskKind::GraphClassification, 2};
  ds.d_in = spec.d_in;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t want = i % 2;
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxRejections && !done; ++attempt) {
      const std::size_t n = draw_size(spec, rng);
      auto edges = erdos_renyi(n, spec.p_edge, rng);
      auto x = degree_one_hot(n, edges, spec.d_in);
      Graph g = Graph::make(n, std::move(edges), spec.d_in, std::move(x), std::size_t{0});
      const std::size_t label = has_triangle(g) ? 1 : 0;
      if (label != want) continue;
      g.label = label;
      ds.graphs.push_back(std::move(g));
      done = true;
    }
    if (!done) {
      throw GenerationError("could not draw a graph with label " + std::to_string(want) + " after " +
                            std::to_string(kMaxRejections) + " attempts; adjust p_edge or the node range");
    }
  }
  return shuffled(std::move(ds), rng);
}

Dataset synth_hopcount_regression(const SyntheticSpec& spec) {
  check_spec(spec);
  SplitMix64 rng(spec.seed);
  Dataset ds;
  ds.task = {TaskKind::GraphRegression, 0};
  ds.d_in = spec.d_in;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t n = draw_size(spec, rng);
    auto edges = erdos_renyi(n, spec.p_edge, rng);
    auto x = degree_one_hot(n, edges, spec.d_in);
    Graph g = Graph::make(n, std::move(edges), spec.d_in, std::move(x), 0.0);
    g.label = average_shortest_path_length(g);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

Dataset synth_node_triangle_task(const SyntheticSpec& spec) {
  check_spec(spec);
  SplitMix64 rng(spec.seed);
  Dataset ds;
  ds.task = {TaskKind::NodeClassification, 2};
  ds.d_in = spec.d_in;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t n = draw_size(spec, rng);
    auto edges = erdos_renyi(n, spec.p_edge, rng);
    auto x = degree_one_hot(n, edges, spec.d_in);
    Graph g = Graph::make(n, std::move(edges), spec.d_in, std::move(x), std::vector<std::size_t>(n, 0));
    g.label = triangle_membership(g);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace gradmask
