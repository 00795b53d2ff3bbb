#pragma once

#include <cstddef>
#include <cstdint>

#include "gradmask/graph.hpp"

namespace gradmask {

struct SyntheticSpec {
  std::size_t count = 700;
  std::size_t n_min = 8;
  std::size_t n_max = 16;
  double p_edge = 0.2;
  std::size_t d_in = 8;  // one-hot degree width, degrees capped at d_in - 1
  std::uint64_t seed = 1;
};

/// True iff the graph contains a 3-clique.
bool has_triangle(const Graph& g);

/// Per-node flag: node lies on at least one triangle.
std::vector<std::size_t> triangle_membership(const Graph& g);

/// Mean hop distance over unordered connected pairs (0 if there are none).
double average_shortest_path_length(const Graph& g);

/// Capped one-hot degree features for a graph with the given edges.
std::vector<double> degree_one_hot(std::size_t n, const std::vector<Edge>& edges, std::size_t d_in);

/// Erdos-Renyi graphs labelled by triangle existence, balanced by rejection
/// sampling so labels alternate before a final seeded shuffle.
Dataset synth_triangle_task(const SyntheticSpec& spec);

/// Erdos-Renyi graphs with target = average shortest path length.
Dataset synth_hopcount_regression(const SyntheticSpec& spec);

/// Node-level task: each node is labelled by triangle membership.
Dataset synth_node_triangle_task(const SyntheticSpec& spec);

}  // namespace gradmask
