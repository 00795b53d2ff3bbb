#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gradmask/ops.hpp"
#include "gradmask/structural_index.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

enum class DecayFn { Exponential, Linear };

/// How mask entries equal to zero act on attention.
///  Multiplicative: the score is multiplied by 0 and still enters the softmax.
///  Exclusion: the pair is removed from the softmax support.
enum class ZeroMode { Multiplicative, Exclusion };

struct UnreachablePolicy {
  /// MaxPlusOne uses max(largest finite psi, 1) + 1, so unreachable pairs never
  /// tie with direct neighbors.
  enum class Kind { MaxPlusOne, Fixed, Exclude };
  Kind kind = Kind::MaxPlusOne;
  double fixed_value = 0.0;  // Kind::Fixed only
};

std::string to_string(DecayFn fn);
DecayFn decay_fn_from_string(const std::string& name);
std::string to_string(ZeroMode mode);
ZeroMode zero_mode_from_string(const std::string& name);
std::string to_string(UnreachablePolicy::Kind kind);
UnreachablePolicy::Kind unreachable_kind_from_string(const std::string& name);

struct DecayConfig {
  /// false gives the plain graph transformer: no mask at all.
  bool enabled = true;
  double lambda = 0.5;
  DecayFn decay_fn = DecayFn::Exponential;
  double linear_endpoint = 6.0;
  ZeroMode zero_mode = ZeroMode::Multiplicative;
  UnreachablePolicy unreachable;

  /// Throws ConfigError. `heads` bounds the initial start points.
  void validate(std::size_t heads) const;
};

/// Initial start point of head `head`: heads begin at 0, 1, 2, ...
double initial_start_point(std::size_t head);

/// Structural index with the unreachable sentinel replaced by a number, plus
/// the pairs that must be excluded from attention (Kind::Exclude only).
struct ResolvedIndex {
  std::size_t n = 0;
  std::vector<double> psi;
  ExcludeMask exclude;
};

ResolvedIndex resolve_unreachable(const StructuralIndex& index, const UnreachablePolicy& policy);

/// lambda^relu(psi - sp), computed as exp(relu(psi - sp) * ln lambda) so the
/// result is differentiable in sp. Requires lambda in (0, 1].
Tensor build_exponential_mask(const Tensor& psi, double lambda, const Tensor& sp);

/// lambda = 0 limit (0^0 = 1): 1 where psi <= sp, else 0. Not differentiable in sp.
Tensor build_gnn_limit_mask(const Tensor& psi, double sp);

/// clamp(1 - relu(psi - sp) / (endpoint - sp), 0, 1). Throws ParameterError
/// when endpoint <= sp.
Tensor build_linear_mask(const Tensor& psi, const Tensor& sp, double endpoint);

/// Dispatches on decay_fn and lambda (lambda == 0 takes the GNN limit).
Tensor build_mask(const Tensor& psi, const DecayConfig& cfg, const Tensor& sp);

/// One mask per head of a layer, each from that head's start point.
std::vector<Tensor> per_head_masks(const Tensor& psi, const DecayConfig& cfg, std::span<const Tensor> start_points,
                                   std::size_t expected_heads);

/// Closed form d lambda^relu(psi - sp) / d sp = -ln(lambda) * M * [psi > sp].
double exponential_mask_sp_derivative(double psi, double lambda, double sp);

}  // namespace gradmask
