#include "gradmask/batch.hpp"

#include <algorithm>
#include <cmath>

#include "gradmask/errors.hpp"

namespace gradmask {

PreparedGraph prepare_graph(const Graph& g, IndexKind kind, std::size_t pe_dim) {
  PreparedGraph p{g, compute_index(g, kind), {}, pe_dim};
  if (pe_dim > 0) p.pe = rwse(g, pe_dim);
  return p;
}

std::vector<PreparedGraph> prepare_dataset(const Dataset& ds, IndexKind kind, std::size_t pe_dim) {
  std::vector<PreparedGraph> out;
  out.reserve(ds.size());
  for (const auto& g : ds.graphs) out.push_back(prepare_graph(g, kind, pe_dim));
  return out;
}

GraphBatch make_batch(std::span<const PreparedGraph* const> graphs, const TaskSpec& task,
                      const UnreachablePolicy& policy) {
  if (graphs.empty()) throw ParameterError("make_batch: empty graph list");
  const std::size_t d_in = graphs[0]->graph.d_in;
  const std::size_t pe_dim = graphs[0]->pe_dim;
  std::size_t n_max = 0;
  for (const auto* p : graphs) {
    if (p->graph.d_in != d_in) throw ParameterError("make_batch: graphs disagree on d_in");
    if (p->pe_dim != pe_dim) throw ParameterError("make_batch: graphs disagree on positional encoding width");
    if (p->index.n != p->graph.n) throw ParameterError("make_batch: structural index size does not match graph");
    n_max = std::max(n_max, p->graph.n);
  }
  const std::size_t batch = graphs.size();
  const std::size_t width = d_in + pe_dim;

  GraphBatch out;
  out.batch_size = batch;
  out.n_max = n_max;
  out.feature_dim = width;
  out.valid.assign(batch * n_max, 0);
  out.exclude.assign(batch * n_max * n_max, 1);
  out.adjacency_self.assign(batch * n_max * n_max, 0);
  std::vector<double> x(batch * n_max * width, 0.0);
  std::vector<double> psi(batch * n_max * n_max, 0.0);
  std::vector<double> a_norm(batch * n_max * n_max, 0.0);

  for (std::size_t b = 0; b < batch; ++b) {
    const Graph& g = graphs[b]->graph;
    const std::size_t n = g.n;
    const std::size_t row0 = b * n_max;
    const std::size_t pair0 = b * n_max * n_max;
    out.node_counts.push_back(n);
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < n; ++i) {
      out.valid[row0 + i] = 1;
      group.push_back(row0 + i);
      out.valid_rows.push_back(row0 + i);
      for (std::size_t c = 0; c < d_in; ++c) x[(row0 + i) * width + c] = g.feature(i, c);
      for (std::size_t c = 0; c < pe_dim; ++c) x[(row0 + i) * width + d_in + c] = graphs[b]->pe[i * pe_dim + c];
    }
    out.pool_groups.push_back(std::move(group));

    const ResolvedIndex resolved = resolve_unreachable(graphs[b]->index, policy);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        psi[pair0 + i * n_max + j] = resolved.psi[i * n + j];
        out.exclude[pair0 + i * n_max + j] = resolved.exclude[i * n + j];
      }
    for (std::size_t i = n; i < n_max; ++i) out.exclude[pair0 + i * n_max + i] = 0;

    const auto deg = g.degrees();
    for (std::size_t i = 0; i < n; ++i) {
      out.adjacency_self[pair0 + i * n_max + i] = 1;
      a_norm[pair0 + i * n_max + i] = 1.0 / static_cast<double>(deg[i] + 1);
    }
    for (const auto& [u, v] : g.edges) {
      const double w = 1.0 / std::sqrt(static_cast<double>((deg[u] + 1) * (deg[v] + 1)));
      a_norm[pair0 + u * n_max + v] = w;
      a_norm[pair0 + v * n_max + u] = w;
      out.adjacency_self[pair0 + u * n_max + v] = 1;
      out.adjacency_self[pair0 + v * n_max + u] = 1;
    }
    out.indices.push_back(graphs[b]->index);

    if (task.kind == TaskKind::GraphClassification) {
      out.class_labels.push_back(std::get<std::size_t>(g.label));
    } else if (task.kind == TaskKind::GraphRegression) {
      out.targets.push_back(std::get<double>(g.label));
    } else {
      const auto& ys = std::get<std::vector<std::size_t>>(g.label);
      out.class_labels.insert(out.class_labels.end(), ys.begin(), ys.end());
    }
  }
  out.features = Tensor::from({batch * n_max, width}, std::move(x));
  out.psi = Tensor::from({batch, n_max, n_max}, std::move(psi));
  out.a_norm = Tensor::from({batch, n_max, n_max}, std::move(a_norm));
  return out;
}

GraphBatch make_batch(const std::vector<Graph>& graphs, const std::vector<HopMatrix>& hop_matrices,
                      const TaskSpec& task, const UnreachablePolicy& policy, std::size_t pe_dim) {
  if (graphs.size() != hop_matrices.size()) throw ParameterError("make_batch: one hop matrix per graph required");
  std::vector<PreparedGraph> prepared;
  prepared.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    PreparedGraph p{graphs[i], hop_matrices[i], {}, pe_dim};
    if (pe_dim > 0) p.pe = rwse(graphs[i], pe_dim);
    prepared.push_back(std::move(p));
  }
  std::vector<const PreparedGraph*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  return make_batch(ptrs, task, policy);
}

}  // namespace gradmask
