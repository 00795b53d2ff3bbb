#include "gradmask/decay_mask.hpp"

#include <algorithm>
#include <cmath>

#include "gradmask/errors.hpp"

namespace gradmask {

std::string to_string(DecayFn fn) { return fn == DecayFn::Exponential ? "exponential" : "linear"; }

DecayFn decay_fn_from_string(const std::string& name) {
  if (name == "exponential" || name == "exp") return DecayFn::Exponential;
  if (name == "linear") return DecayFn::Linear;
  throw ConfigError("unknown decay function \"" + name + "\"");
}

std::string to_string(ZeroMode mode) { return mode == ZeroMode::Multiplicative ? "multiplicative" : "exclusion"; }

ZeroMode zero_mode_from_string(const std::string& name) {
  if (name == "multiplicative") return ZeroMode::Multiplicative;
  if (name == "exclusion") return ZeroMode::Exclusion;
  throw ConfigError("unknown zero mode \"" + name + "\"");
}

std::string to_string(UnreachablePolicy::Kind kind) {
  switch (kind) {
    case UnreachablePolicy::Kind::MaxPlusOne:
      return "max_plus_one";
    case UnreachablePolicy::Kind::Fixed:
      return "fixed";
    case UnreachablePolicy::Kind::Exclude:
      return "exclude";
  }
  return "?";
}

UnreachablePolicy::Kind unreachable_kind_from_string(const std::string& name) {
  if (name == "max_plus_one") return UnreachablePolicy::Kind::MaxPlusOne;
  if (name == "fixed") return UnreachablePolicy::Kind::Fixed;
  if (name == "exclude") return UnreachablePolicy::Kind::Exclude;
  throw ConfigError("unknown unreachable policy \"" + name + "\"");
}

double initial_start_point(std::size_t head) { return static_cast<double>(head); }

void DecayConfig::validate(std::size_t heads) const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("decay.lambda must lie in [0, 1]");
  if (decay_fn == DecayFn::Linear) {
    const double max_sp = heads == 0 ? 0.0 : initial_start_point(heads - 1);
    if (!(linear_endpoint > max_sp)) {
      throw ConfigError("decay.linear_endpoint must exceed the largest initial start point (" +
                        std::to_string(max_sp) + ")");
    }
  }
  if (unreachable.kind == UnreachablePolicy::Kind::Fixed && !std::isfinite(unreachable.fixed_value)) {
    throw ConfigError("decay.unreachable_value must be finite");
  }
}

ResolvedIndex resolve_unreachable(const StructuralIndex& index, const UnreachablePolicy& policy) {
  ResolvedIndex out{index.n, index.value, ExcludeMask(index.value.size(), 0)};
  const double replacement = policy.kind == UnreachablePolicy::Kind::Fixed ? policy.fixed_value
                                                                           : std::max(index.max_finite(), 1.0) + 1.0;
  for (std::size_t e = 0; e < index.value.size(); ++e) {
    if (index.reach[e] != Reach::Unreachable) continue;
    if (policy.kind == UnreachablePolicy::Kind::Exclude) {
      out.psi[e] = 0.0;
      out.exclude[e] = 1;
    } else {
      out.psi[e] = replacement;
    }
  }
  return out;
}

Tensor build_exponential_mask(const Tensor& psi, double lambda, const Tensor& sp) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ParameterError("exponential mask needs lambda in (0, 1]; use the GNN-limit mask for lambda = 0");
  }
  const Tensor shifted = relu(sub(psi, expand(sp, psi.shape())));
  return exp(mul_scalar(shifted, std::log(lambda)));
}

Tensor build_gnn_limit_mask(const Tensor& psi, double sp) {
  std::vector<double> m(psi.numel());
  const auto pv = psi.values();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = pv[i] <= sp ? 1.0 : 0.0;
  return Tensor::from(psi.shape(), std::move(m));
}

Tensor build_linear_mask(const Tensor& psi, const Tensor& sp, double endpoint) {
  if (!(endpoint > sp.item())) {
    throw ParameterError("linear decay endpoint " + std::to_string(endpoint) + " must exceed start point " +
                         std::to_string(sp.item()));
  }
  const Tensor shifted = relu(sub(psi, expand(sp, psi.shape())));
  const Tensor span = expand(add_scalar(neg(sp), endpoint), psi.shape());
  return relu(add_scalar(neg(div(shifted, span)), 1.0));
}

Tensor build_mask(const Tensor& psi, const DecayConfig& cfg, const Tensor& sp) {
  if (cfg.decay_fn == DecayFn::Linear) return build_linear_mask(psi, sp, cfg.linear_endpoint);
  if (cfg.lambda == 0.0) return build_gnn_limit_mask(psi, sp.item());
  return build_exponential_mask(psi, cfg.lambda, sp);
}

std::vector<Tensor> per_head_masks(const Tensor& psi, const DecayConfig& cfg, std::span<const Tensor> start_points,
                                   std::size_t expected_heads) {
  if (start_points.size() != expected_heads) {
    throw ConfigError("layer has " + std::to_string(start_points.size()) + " start points for " +
                      std::to_string(expected_heads) + " heads");
  }
  std::vector<Tensor> masks;
  masks.reserve(start_points.size());
  for (const auto& sp : start_points) masks.push_back(build_mask(psi, cfg, sp));
  return masks;
}

double exponential_mask_sp_derivative(double psi, double lambda, double sp) {
  if (!(psi > sp)) return 0.0;
  const double log_lambda = std::log(lambda);
  return -log_lambda * std::exp((psi - sp) * log_lambda);
}

}  // namespace gradmask
