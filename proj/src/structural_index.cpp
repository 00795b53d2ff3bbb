#include "gradmask/structural_index.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include "gradmask/errors.hpp"
#include "json.hpp"

namespace gradmask {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCurvatureEps = 1e-9;

void scale_finite(StructuralIndex& idx, double factor) {
  for (std::size_t i = 0; i < idx.value.size(); ++i) {
    if (idx.reach[i] == Reach::Finite) idx.value[i] *= factor;
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

StructuralIndex StructuralIndex::zeros(std::size_t n) {
  return {n, std::vector<double>(n * n, 0.0), std::vector<Reach>(n * n, Reach::Finite)};
}

bool StructuralIndex::has_unreachable() const {
  return std::find(reach.begin(), reach.end(), Reach::Unreachable) != reach.end();
}

double StructuralIndex::max_finite() const {
  double mx = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (reach[i] == Reach::Finite) mx = std::max(mx, value[i]);
  }
  return mx;
}

std::optional<double> StructuralIndex::mean_finite() const {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !finite(i, j)) continue;
      total += at(i, j);
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

std::string to_string(IndexKind kind) {
  switch (kind) {
    case IndexKind::SPH:
      return "sph";
    case IndexKind::CURVE:
      return "curve";
    case IndexKind::FS:
      return "fs";
  }
  return "?";
}

IndexKind index_kind_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "sph") return IndexKind::SPH;
  if (lower == "curve") return IndexKind::CURVE;
  if (lower == "fs") return IndexKind::FS;
  throw ConfigError("unknown structural index \"" + name + "\" (expected sph, curve or fs)");
}

HopMatrix shortest_path_hops(const Graph& g) {
  const std::size_t n = g.n;
  HopMatrix h{n, std::vector<double>(n * n, 0.0), std::vector<Reach>(n * n, Reach::Unreachable)};
  const auto adj = g.neighbors();
  std::vector<long> dist(n);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (dist[t] >= 0) {
        h.value[s * n + t] = static_cast<double>(dist[t]);
        h.reach[s * n + t] = Reach::Finite;
      }
    }
  }
  return h;
}

std::vector<double> forman_curvature(const Graph& g) {
  const auto adj = g.neighbors();
  std::vector<double> curv;
  curv.reserve(g.edges.size());
  for (const auto& [u, v] : g.edges) {
    std::size_t common = 0;
    auto a = adj[u].begin(), b = adj[v].begin();
    while (a != adj[u].end() && b != adj[v].end()) {
      if (*a < *b) {
        ++a;
      } else if (*b < *a) {
        ++b;
      } else {
        ++common;
        ++a;
        ++b;
      }
    }
    curv.push_back(4.0 - static_cast<double>(adj[u].size()) - static_cast<double>(adj[v].size()) +
                   3.0 * static_cast<double>(common));
  }
  return curv;
}

std::vector<double> curvature_edge_weights(const Graph& g) {
  const auto curv = forman_curvature(g);
  if (curv.empty()) return {};
  const auto [lo, hi] = std::minmax_element(curv.begin(), curv.end());
  const double c_min = *lo, c_max = *hi;
  std::vector<double> w(curv.size());
  for (std::size_t e = 0; e < curv.size(); ++e) w[e] = 1.0 + (c_max - curv[e]) / (c_max - c_min + kCurvatureEps);
  return w;
}

StructuralIndex weighted_shortest_paths(const Graph& g, const std::vector<double>& edge_weights) {
  if (edge_weights.size() != g.edges.size()) throw ParameterError("one weight per edge required");
  const std::size_t n = g.n;
  std::vector<double> d(n * n, kInf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    if (!(edge_weights[e] > 0.0)) throw ParameterError("edge weights must be positive");
    d[u * n + v] = std::min(d[u * n + v], edge_weights[e]);
    d[v * n + u] = d[u * n + v];
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const double dik = d[i * n + k];
      if (dik == kInf) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double cand = dik + d[k * n + j];
        if (cand < d[i * n + j]) d[i * n + j] = cand;
      }
    }
  StructuralIndex out{n, std::vector<double>(n * n, 0.0), std::vector<Reach>(n * n, Reach::Unreachable)};
  for (std::size_t i = 0; i < n * n; ++i) {
    if (d[i] < kInf) {
      out.value[i] = d[i];
      out.reach[i] = Reach::Finite;
    }
  }
  return out;
}

StructuralIndex curvature_index(const Graph& g) {
  if (g.n == 1) return StructuralIndex::zeros(1);
  StructuralIndex out = weighted_shortest_paths(g, curvature_edge_weights(g));
  const auto target = shortest_path_hops(g).mean_finite();
  const auto current = out.mean_finite();
  if (target && current && *current > 0.0) scale_finite(out, *target / *current);
  return out;
}

StructuralIndex feature_similarity_index(const Graph& g) {
  const std::size_t n = g.n, d = g.d_in;
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) sq[i] += g.feature(i, c) * g.feature(i, c);
  StructuralIndex out = StructuralIndex::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double cosine = 0.0;
      if (sq[i] > 0.0 && sq[j] > 0.0) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += g.feature(i, c) * g.feature(j, c);
        cosine = std::clamp(dot / std::sqrt(sq[i] * sq[j]), -1.0, 1.0);
      }
      out.value[i * n + j] = 1.0 - cosine;
    }
  }
  const auto target = shortest_path_hops(g).mean_finite();
  const auto current = out.mean_finite();
  if (target && current && *current > 0.0) scale_finite(out, *target / *current);
  return out;
}

StructuralIndex compute_index(const Graph& g, IndexKind kind) {
  switch (kind) {
    case IndexKind::SPH:
      return shortest_path_hops(g);
    case IndexKind::CURVE:
      return curvature_index(g);
    case IndexKind::FS:
      return feature_similarity_index(g);
  }
  throw ConfigError("unknown index kind");
}

std::vector<double> rwse(const Graph& g, std::size_t k) {
  if (k == 0) throw ParameterError("rwse needs k >= 1");
  const std::size_t n = g.n;
  const auto deg = g.degrees();
  std::vector<double> p(n * n, 0.0);
  for (const auto& [u, v] : g.edges) {
    p[u * n + v] = 1.0 / static_cast<double>(deg[u]);
    p[v * n + u] = 1.0 / static_cast<double>(deg[v]);
  }
  std::vector<double> out(n * k, 0.0);
  std::vector<double> power = p, next(n * n);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < n; ++i) out[i * k + t] = power[i * n + i];
    if (t + 1 == k) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < n; ++m) {
        const double a = power[i * n + m];
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) next[i * n + j] += a * p[m * n + j];
      }
    std::swap(power, next);
  }
  return out;
}

void save_index_cache(const std::string& path, std::uint64_t dataset_hash, IndexKind kind,
                      const std::vector<StructuralIndex>& indices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write index cache " + path);
  out << json{{"format", "gradmask-index-cache"},
              {"version", 1},
              {"dataset_hash", hex64(dataset_hash)},
              {"index", to_string(kind)},
              {"count", indices.size()}}
             .dump()
      << '\n';
  for (std::size_t gi = 0; gi < indices.size(); ++gi) {
    const auto& idx = indices[gi];
    json psi = json::array();
    for (std::size_t e = 0; e < idx.value.size(); ++e) {
      if (idx.reach[e] == Reach::Finite) {
        psi.push_back(idx.value[e]);
      } else {
        psi.push_back(nullptr);
      }
    }
    out << json{{"graph", gi}, {"n", idx.n}, {"psi", std::move(psi)}}.dump() << '\n';
  }
}

std::optional<std::vector<StructuralIndex>> load_index_cache(const std::string& path, std::uint64_t dataset_hash,
                                                             IndexKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  try {
    if (!std::getline(in, line)) return std::nullopt;
    const json header = json::parse(line);
    if (header.value("format", "") != "gradmask-index-cache" || header.value("version", 0) != 1 ||
        header.value("dataset_hash", "") != hex64(dataset_hash) || header.value("index", "") != to_string(kind)) {
      return std::nullopt;
    }
    const auto count = header.at("count").get<std::size_t>();
    std::vector<StructuralIndex> out;
    out.reserve(count);
    while (std::getline(in, line)) {
      const json obj = json::parse(line);
      if (obj.at("graph").get<std::size_t>() != out.size()) return std::nullopt;
      const auto n = obj.at("n").get<std::size_t>();
      const auto& psi = obj.at("psi");
      if (psi.size() != n * n) return std::nullopt;
      StructuralIndex idx{n, std::vector<double>(n * n, 0.0), std::vector<Reach>(n * n, Reach::Unreachable)};
      for (std::size_t e = 0; e < n * n; ++e) {
        if (!psi[e].is_null()) {
          idx.value[e] = psi[e].get<double>();
          idx.reach[e] = Reach::Finite;
        }
      }
      out.push_back(std::move(idx));
    }
    if (out.size() != count) return std::nullopt;
    return out;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace gradmask
