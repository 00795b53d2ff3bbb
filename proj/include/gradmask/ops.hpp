#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gradmask/rng.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

/// Flags, one per element, marking entries removed from a softmax support.
using ExcludeMask = std::vector<std::uint8_t>;

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
/// [B,m,k] x [B,k,n], or [B,m,k] x [B,n,k]^T when transpose_b.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor transpose(const Tensor& a);  // 2-D only
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);  // 2-D, equal row counts
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);

// Elementwise. Binary ops require identical shapes; use expand() for scalars.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
/// relu'(0) is 0.
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on any non-positive element.
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Broadcast a one-element tensor to `shape`; backward sums.
Tensor expand(const Tensor& scalar, Shape shape);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// x[m,n] + bias[n] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

/// Per-row normalization over the last axis of x[m,d], then gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Numerically stable softmax along the last axis. Excluded entries get
/// exactly 0 and are left out of the normalizer. Throws DegenerateRowError
/// if a row has no included entry.
Tensor softmax_rows(const Tensor& scores, const ExcludeMask& exclude = {});

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, SplitMix64& rng, bool training);

/// Mean cross-entropy of logits[m,C] against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
/// Mean absolute error of pred (m elements) against targets.
Tensor mean_abs_error(const Tensor& pred, std::span<const double> targets);

/// Row-group means: out[g] = mean of x rows listed in groups[g].
Tensor mean_pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups);

/// Records the smallest |input| seen by relu() on this thread while alive;
/// gradient checks use it to reject probes that sit on a kink.
class ReluKinkMonitor {
 public:
  ReluKinkMonitor();
  ~ReluKinkMonitor();
  ReluKinkMonitor(const ReluKinkMonitor&) = delete;
  ReluKinkMonitor& operator=(const ReluKinkMonitor&) = delete;
  double min_abs_input() const;

 private:
  ReluKinkMonitor* previous_;
  double min_abs_;
  friend void note_relu_input(double);
};

void note_relu_input(double v);

/// Scales the softmax backward pass on this thread while alive. Exists only
/// so the gradient-check harness can be shown to catch a wrong derivative.
class ScopedSoftmaxGradFault {
 public:
  explicit ScopedSoftmaxGradFault(double scale);
  ~ScopedSoftmaxGradFault();
  ScopedSoftmaxGradFault(const ScopedSoftmaxGradFault&) = delete;
  ScopedSoftmaxGradFault& operator=(const ScopedSoftmaxGradFault&) = delete;

 private:
  double previous_;
};

}  // namespace gradmask
