#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/graph.hpp"

namespace gradmask {

/// Status of a node pair in a structural index. Unreachable pairs and
/// batch padding are tagged explicitly instead of using a magic value.
enum class Reach : std::uint8_t { Finite, Unreachable, Padding };

/// Pairwise structural index psi(i, j). `value` is meaningful only where
/// reach == Finite (it is 0 elsewhere).
struct StructuralIndex {
  std::size_t n = 0;
  std::vector<double> value;
  std::vector<Reach> reach;

  static StructuralIndex zeros(std::size_t n);

  double at(std::size_t i, std::size_t j) const { return value[i * n + j]; }
  Reach reach_at(std::size_t i, std::size_t j) const { return reach[i * n + j]; }
  bool finite(std::size_t i, std::size_t j) const { return reach_at(i, j) == Reach::Finite; }
  bool has_unreachable() const;
  /// Largest finite off-diagonal entry (0 if none).
  double max_finite() const;
  /// Mean over finite off-diagonal entries, or nullopt if there are none.
  std::optional<double> mean_finite() const;

  bool operator==(const StructuralIndex&) const = default;
};

using HopMatrix = StructuralIndex;

enum class IndexKind { SPH, CURVE, FS };

std::string to_string(IndexKind kind);  // sph | curve | fs
IndexKind index_kind_from_string(const std::string& name);

/// Unweighted all-pairs hop distances by BFS from every node.
HopMatrix shortest_path_hops(const Graph& g);

/// Forman-style edge curvature 4 - deg(u) - deg(v) + 3 * triangles(u, v),
/// aligned with g.edges.
std::vector<double> forman_curvature(const Graph& g);

/// Positive edge weights 1 + (c_max - c) / (c_max - c_min + 1e-9).
std::vector<double> curvature_edge_weights(const Graph& g);

/// All-pairs weighted shortest paths (Floyd-Warshall); weights align with g.edges.
StructuralIndex weighted_shortest_paths(const Graph& g, const std::vector<double>& edge_weights);

/// Curvature-weighted distances rescaled so their finite mean matches the
/// mean finite hop distance of the same graph.
StructuralIndex curvature_index(const Graph& g);

/// (1 - cos(x_i, x_j)) * scale with scale matching the mean finite hop
/// distance. Rows with zero norm have cosine 0 to every other node.
StructuralIndex feature_similarity_index(const Graph& g);

StructuralIndex compute_index(const Graph& g, IndexKind kind);

/// Random-walk structural encoding: column t-1 holds diag(P^t), P = D^-1 A,
/// for t = 1..k. Row-major n x k.
std::vector<double> rwse(const Graph& g, std::size_t k);

/// JSON-lines cache of per-graph indices, keyed by dataset content hash.
void save_index_cache(const std::string& path, std::uint64_t dataset_hash, IndexKind kind,
                      const std::vector<StructuralIndex>& indices);
/// nullopt when the file is absent, stale (hash or kind mismatch) or of another version.
std::optional<std::vector<StructuralIndex>> load_index_cache(const std::string& path, std::uint64_t dataset_hash,
                                                             IndexKind kind);

}  // namespace gradmask
