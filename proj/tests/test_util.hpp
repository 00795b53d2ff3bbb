#pragma once

#include <cstddef>
#include <vector>

#include "gradmask/graph.hpp"
#include "gradmask/rng.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask::testing {

inline Tensor random_tensor(Shape shape, SplitMix64& rng, bool requires_grad = false, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// G(n, p) with uniform random features in [-1, 1].
inline Graph random_graph(std::size_t n, double p, std::size_t d_in, SplitMix64& rng, GraphLabel label = std::size_t{0}) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  std::vector<double> x(n * d_in);
  for (auto& f : x) f = rng.uniform(-1.0, 1.0);
  return Graph::make(n, std::move(edges), d_in, std::move(x), std::move(label));
}

/// Random spanning tree plus G(n, p) extra edges, so the graph is connected.
inline Graph random_connected_graph(std::size_t n, double p, std::size_t d_in, SplitMix64& rng,
                                    GraphLabel label = std::size_t{0}) {
  std::vector<Edge> edges;
  const auto order = random_permutation(n, rng);
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(order[i], order[rng.below(i)]);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  std::vector<double> x(n * d_in);
  for (auto& f : x) f = rng.uniform(-1.0, 1.0);
  return Graph::make(n, std::move(edges), d_in, std::move(x), std::move(label));
}

inline Graph path_graph(std::size_t n, std::size_t d_in = 1) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return Graph::make(n, std::move(edges), d_in, std::vector<double>(n * d_in, 1.0), std::size_t{0});
}

}  // namespace gradmask::testing
