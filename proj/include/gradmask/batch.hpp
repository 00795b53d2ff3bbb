#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gradmask/decay_mask.hpp"
#include "gradmask/graph.hpp"
#include "gradmask/ops.hpp"
#include "gradmask/structural_index.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

/// Per-graph data that does not change during training.
struct PreparedGraph {
  Graph graph;
  StructuralIndex index;
  std::vector<double> pe;  // n x pe_dim, empty when pe_dim == 0
  std::size_t pe_dim = 0;
};

PreparedGraph prepare_graph(const Graph& g, IndexKind kind, std::size_t pe_dim);
std::vector<PreparedGraph> prepare_dataset(const Dataset& ds, IndexKind kind, std::size_t pe_dim);

/// Graphs padded to a common node count n_max. Row r = b * n_max + i of the
/// stacked tensors belongs to node i of graph b.
struct GraphBatch {
  std::size_t batch_size = 0;
  std::size_t n_max = 0;
  std::size_t feature_dim = 0;  // d_in + pe_dim
  std::vector<std::size_t> node_counts;

  Tensor features;            // [B * n_max, feature_dim]
  std::vector<std::uint8_t> valid;  // [B * n_max]
  Tensor psi;                 // [B, n_max, n_max], resolved; 0 on padding
  ExcludeMask exclude;        // [B, n_max, n_max]; padding + excluded unreachable pairs
  Tensor a_norm;              // [B, n_max, n_max], D^-1/2 (A + I) D^-1/2
  std::vector<std::uint8_t> adjacency_self;  // [B, n_max, n_max], A + I on valid nodes
  std::vector<StructuralIndex> indices;      // unpadded, unresolved

  std::vector<std::vector<std::size_t>> pool_groups;  // valid rows per graph
  std::vector<std::size_t> valid_rows;                // all valid rows, in order

  // Targets aligned with predictions: one per graph, or one per valid node.
  std::vector<std::size_t> class_labels;
  std::vector<double> targets;
};

/// Pads to the largest graph. Padded pairs are excluded from attention; a
/// padded row keeps only its own diagonal so its softmax stays defined, and
/// padded rows never feed valid rows. Throws ParameterError on an empty list
/// or mixed d_in.
GraphBatch make_batch(std::span<const PreparedGraph* const> graphs, const TaskSpec& task,
                      const UnreachablePolicy& policy);

/// Convenience overload that prepares graphs on the fly.
GraphBatch make_batch(const std::vector<Graph>& graphs, const std::vector<HopMatrix>& hop_matrices,
                      const TaskSpec& task, const UnreachablePolicy& policy = {}, std::size_t pe_dim = 0);

}  // namespace gradmask
