#include "gradmask/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradmask/errors.hpp"

namespace gradmask {

namespace {

using detail::Node;

template <typename F>
void accumulate(Node& parent, F&& f) {
  if (parent.requires_grad) f(parent.ensure_grad());
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& px = *self.parents[0];
    accumulate(px, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(px.value[i], self.value[i]);
    });
  });
}

thread_local ReluKinkMonitor* t_kink_monitor = nullptr;
thread_local double t_softmax_grad_scale = 1.0;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    accumulate(pa, [&](std::vector<double>& g) { gemm_nt(self.grad.data(), pb.value.data(), g.data(), m, n, k); });
    accumulate(pb, [&](std::vector<double>& g) { gemm_tn(pa.value.data(), self.grad.data(), g.data(), k, m, n); });
  });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "batched_matmul");
  require_rank(b, 3, "batched_matmul");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw DimensionError("batched_matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      gemm_nt(av + s * m * k, bv + s * n * k, out.data() + s * m * n, m, k, n);
    } else {
      gemm_nn(av + s * m * k, bv + s * k * n, out.data() + s * m * n, m, k, n);
    }
  }
  return make_result({batch, m, n}, std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t s = 0; s < batch; ++s) {
      const double* dc = self.grad.data() + s * m * n;
      const double* as = pa.value.data() + s * m * k;
      const double* bs = pb.value.data() + s * k * n;
      if (transpose_b) {
        // C = A B^T with B[n,k]: dA = dC B, dB = dC^T A
        accumulate(pa, [&](std::vector<double>& g) { gemm_nn(dc, bs, g.data() + s * m * k, m, n, k); });
        accumulate(pb, [&](std::vector<double>& g) { gemm_tn(dc, as, g.data() + s * n * k, n, m, k); });
      } else {
        accumulate(pa, [&](std::vector<double>& g) { gemm_nt(dc, bs, g.data() + s * m * k, m, n, k); });
        accumulate(pb, [&](std::vector<double>& g) { gemm_tn(as, dc, g.data() + s * k * n, k, m, n); });
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  const auto xv = x.values();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x}, [](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const auto pv = parts[t].values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.begin() + i * widths[t], widths[t], out.begin() + i * total + offset);
    offset += widths[t];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result({m, total}, std::move(out), std::move(parents), [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < widths.size(); ++t) {
      accumulate(*self.parents[t], [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[t]; ++j) g[i * widths[t] + j] += self.grad[i * total + off + j];
      });
      off += widths[t];
    }
  });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "select_rows");
  const std::size_t m = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * d);
  const auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) throw DimensionError("select_rows: row " + std::to_string(idx[r]) + " out of range");
    std::copy_n(xv.begin() + idx[r] * d, d, out.begin() + r * d);
  }
  const std::size_t count = idx.size();
  return make_result({count, d}, std::move(out), {x}, [idx = std::move(idx), d](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
    });
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p)
      accumulate(*self.parents[p], [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(*self.parents[1], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    accumulate(pa, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    });
    accumulate(pb, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    });
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: zero divisor");
    out[i] = av[i] / bv[i];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    accumulate(pa, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.value[i];
    });
    accumulate(pb, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / pb.value[i];
    });
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  if (t_kink_monitor) {
    for (double v : x.values()) note_relu_input(v);
  }
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor expand(const Tensor& scalar, Shape shape) {
  if (scalar.numel() != 1) throw DimensionError("expand: source must have one element, got " + shape_to_string(scalar.shape()));
  const std::size_t n = shape_numel(shape);
  return make_result(std::move(shape), std::vector<double>(n, scalar.values()[0]), {scalar}, [](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      double s = 0.0;
      for (double v : self.grad) s += v;
      g[0] += s;
    });
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s * inv}, {x}, [inv](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (double& v : g) v += self.grad[0] * inv;
    });
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  const auto xv = x.values(), bv = bias.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  return make_result({m, n}, std::move(out), {x, bias}, [m, n](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(*self.parents[1], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), d = x.dim(1);
  if (d == 0) throw DimensionError("layer_norm: zero feature dimension");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " elements");
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  std::vector<double> out(m * d), xhat(m * d), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
    }
  }
  return make_result({m, d}, std::move(out), {x, gain, bias},
                     [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pg = *self.parents[1];
                       Node& pb = *self.parents[2];
                       accumulate(pg, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j] * xhat[i * d + j];
                       });
                       accumulate(pb, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
                       });
                       accumulate(px, [&](std::vector<double>& g) {
                         std::vector<double> dxhat(d);
                         for (std::size_t i = 0; i < m; ++i) {
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             dxhat[j] = self.grad[i * d + j] * pg.value[j];
                             mean_d += dxhat[j];
                             mean_dx += dxhat[j] * xhat[i * d + j];
                           }
                           mean_d /= static_cast<double>(d);
                           mean_dx /= static_cast<double>(d);
                           for (std::size_t j = 0; j < d; ++j)
                             g[i * d + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * d + j] * mean_dx);
                         }
                       });
                     });
}

Tensor softmax_rows(const Tensor& scores, const ExcludeMask& exclude) {
  if (scores.rank() == 0) throw DimensionError("softmax_rows: rank-0 input");
  const std::size_t n = scores.shape().back();
  const std::size_t rows = n == 0 ? 0 : scores.numel() / n;
  if (!exclude.empty() && exclude.size() != scores.numel()) {
    throw DimensionError("softmax_rows: exclusion mask size does not match " + shape_to_string(scores.shape()));
  }
  const auto sv = scores.values();
  std::vector<double> out(sv.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = sv.data() + r * n;
    const std::uint8_t* ex = exclude.empty() ? nullptr : exclude.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (ex && ex[j]) continue;
      any = true;
      mx = std::max(mx, row[j]);
    }
    if (!any) throw DegenerateRowError("softmax_rows: row " + std::to_string(r) + " has every entry excluded");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (ex && ex[j]) continue;
      out[r * n + j] = std::exp(row[j] - mx);
      z += out[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= z;
  }
  const double fault = t_softmax_grad_scale;
  return make_result(scores.shape(), std::move(out), {scores}, [rows, n, fault](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* dy = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += fault * y[j] * (dy[j] - dot);
      }
    });
  });
}

Tensor dropout(const Tensor& x, double p, SplitMix64& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  const auto xv = x.values();
  std::vector<double> keep(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    keep[i] = rng.uniform() < p ? 0.0 : scale;
    out[i] = xv[i] * keep[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [keep = std::move(keep)](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * keep[i];
    });
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (labels.size() != m) throw DimensionError("cross_entropy: label count does not match logits rows");
  if (m == 0) throw DimensionError("cross_entropy: empty batch");
  const auto lv = logits.values();
  std::vector<double> probs(m * c);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (lab[i] >= c) throw DimensionError("cross_entropy: label " + std::to_string(lab[i]) + " out of range");
    const double* row = lv.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!std::isfinite(row[j])) throw NumericalError("cross_entropy: non-finite logit");
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
    total += log_z - row[lab[i]];
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  return make_result({1}, {total * inv_m}, {logits},
                     [probs = std::move(probs), lab = std::move(lab), m, c, inv_m](Node& self) {
                       accumulate(*self.parents[0], [&](std::vector<double>& g) {
                         const double scale = self.grad[0] * inv_m;
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             g[i * c + j] += scale * (probs[i * c + j] - (j == lab[i] ? 1.0 : 0.0));
                       });
                     });
}

Tensor mean_abs_error(const Tensor& pred, std::span<const double> targets) {
  if (pred.numel() != targets.size()) throw DimensionError("mean_abs_error: prediction/target count mismatch");
  if (targets.empty()) throw DimensionError("mean_abs_error: empty batch");
  const auto pv = pred.values();
  std::vector<double> sign(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!std::isfinite(pv[i])) throw NumericalError("mean_abs_error: non-finite prediction");
    const double diff = pv[i] - targets[i];
    total += std::abs(diff);
    sign[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  const double inv = 1.0 / static_cast<double>(pv.size());
  return make_result({1}, {total * inv}, {pred}, [sign = std::move(sign), inv](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv * sign[i];
    });
  });
}

Tensor mean_pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups) {
  require_rank(x, 2, "mean_pool_rows");
  const std::size_t m = x.dim(0), d = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(groups.size() * d, 0.0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (groups[gi].empty()) throw DimensionError("mean_pool_rows: empty group");
    for (std::size_t r : groups[gi]) {
      if (r >= m) throw DimensionError("mean_pool_rows: row index out of range");
      for (std::size_t j = 0; j < d; ++j) out[gi * d + j] += xv[r * d + j];
    }
    const double count = static_cast<double>(groups[gi].size());
    for (std::size_t j = 0; j < d; ++j) out[gi * d + j] /= count;
  }
  return make_result({groups.size(), d}, std::move(out), {x}, [groups, d](Node& self) {
    accumulate(*self.parents[0], [&](std::vector<double>& g) {
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double inv = 1.0 / static_cast<double>(groups[gi].size());
        for (std::size_t r : groups[gi])
          for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[gi * d + j] * inv;
      }
    });
  });
}

ReluKinkMonitor::ReluKinkMonitor()
    : previous_(t_kink_monitor), min_abs_(std::numeric_limits<double>::infinity()) {
  t_kink_monitor = this;
}

ReluKinkMonitor::~ReluKinkMonitor() { t_kink_monitor = previous_; }

double ReluKinkMonitor::min_abs_input() const { return min_abs_; }

void note_relu_input(double v) {
  if (t_kink_monitor) t_kink_monitor->min_abs_ = std::min(t_kink_monitor->min_abs_, std::abs(v));
}

ScopedSoftmaxGradFault::ScopedSoftmaxGradFault(double scale) : previous_(t_softmax_grad_scale) {
  t_softmax_grad_scale = scale;
}

ScopedSoftmaxGradFault::~ScopedSoftmaxGradFault() { t_softmax_grad_scale = previous_; }

}  // namespace gradmask
