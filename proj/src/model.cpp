#include "gradmask/model.hpp"

#include <cmath>

#include "gradmask/errors.hpp"
#include "gradmask/ops.hpp"

namespace gradmask {

namespace {

Tensor uniform_weight(std::size_t in, std::size_t out, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from({in, out}, std::move(w), true);
}

Linear make_linear(std::size_t in, std::size_t out, bool with_bias, SplitMix64& rng) {
  Linear l{uniform_weight(in, out, rng), {}};
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

LayerNormParams make_norm(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

Tensor apply_norm(const Tensor& x, const LayerNormParams& p, double eps) { return layer_norm(x, p.gain, p.bias, eps); }

}  // namespace

std::string to_string(PeKind pe) { return pe == PeKind::Rwse ? "rwse" : "none"; }

PeKind pe_kind_from_string(const std::string& name) {
  if (name == "rwse") return PeKind::Rwse;
  if (name == "none") return PeKind::None;
  throw ConfigError("unknown positional encoding \"" + name + "\"");
}

std::string to_string(MpnnKind mpnn) { return mpnn == MpnnKind::GcnParallel ? "gcn" : "none"; }

MpnnKind mpnn_kind_from_string(const std::string& name) {
  if (name == "gcn" || name == "gcn-parallel") return MpnnKind::GcnParallel;
  if (name == "none") return MpnnKind::None;
  throw ConfigError("unknown mpnn branch \"" + name + "\"");
}

std::string to_string(Activation act) { return act == Activation::Sigmoid ? "sigmoid" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation \"" + name + "\"");
}

std::size_t ModelConfig::ffn_width() const {
  return static_cast<std::size_t>(std::llround(ffn_multiplier * static_cast<double>(hidden)));
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model.layers must be >= 1");
  if (heads < 1) throw ConfigError("model.heads must be >= 1");
  if (hidden < 1 || hidden % heads != 0) throw ConfigError("model.hidden must be a positive multiple of model.heads");
  if (ffn_width() < 1) throw ConfigError("model.ffn_multiplier gives an empty feed-forward layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(attention_dropout >= 0.0 && attention_dropout < 1.0)) {
    throw ConfigError("model.attention_dropout must lie in [0, 1)");
  }
  if (pe == PeKind::Rwse && pe_dim < 1) throw ConfigError("model.pe_dim must be >= 1 with rwse");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("model.layer_norm_eps must be positive");
  decay.validate(heads);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row_bias(y, bias) : y;
}

Tensor masked_attention_head(const Tensor& h, std::size_t batch, std::size_t n, const AttentionHeadParams& params,
                             const Tensor& mask, const ExcludeMask& exclude, double attention_dropout,
                             const ForwardOptions& opts, Tensor* attention_out) {
  const std::size_t dh = params.wq.dim(1);
  const Tensor q = reshape(matmul(h, params.wq), {batch, n, dh});
  const Tensor k = reshape(matmul(h, params.wk), {batch, n, dh});
  const Tensor v = reshape(matmul(h, params.wv), {batch, n, dh});
  Tensor scores = mul_scalar(batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (mask.defined()) {
    if (mask.shape() != scores.shape()) {
      throw DimensionError("attention mask " + shape_to_string(mask.shape()) + " does not match scores " +
                           shape_to_string(scores.shape()));
    }
    scores = mul(scores, mask);
  }
  Tensor attn = softmax_rows(scores, exclude);
  if (attention_out) *attention_out = attn;
  if (opts.training && attention_dropout > 0.0) {
    if (!opts.rng) throw ContractError("training-mode dropout needs an rng");
    attn = dropout(attn, attention_dropout, *opts.rng, true);
  }
  return reshape(batched_matmul(attn, v), {batch * n, dh});
}

Tensor gcn_branch(const Tensor& h, const Tensor& a_norm, const Linear& w, Activation act) {
  const std::size_t batch = a_norm.dim(0), n = a_norm.dim(1);
  const Tensor hw = w(h);
  const std::size_t d = hw.dim(1);
  const Tensor agg = reshape(batched_matmul(a_norm, reshape(hw, {batch, n, d})), {batch * n, d});
  return act == Activation::Sigmoid ? sigmoid(agg) : relu(agg);
}

GradformerModel::GradformerModel(ModelConfig cfg, TaskSpec task, std::size_t d_in, std::uint64_t seed)
    : cfg_(std::move(cfg)), task_(task), d_in_(d_in) {
  cfg_.validate();
  if (task_.is_classification() && task_.num_classes < 2) throw ConfigError("classification needs >= 2 classes");
  SplitMix64 rng(seed);
  const std::size_t hid = cfg_.hidden, dh = cfg_.head_dim();
  input_proj_ = make_linear(d_in_ + cfg_.effective_pe_dim(), hid, true, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    EncoderLayer layer;
    layer.attn_norm = make_norm(hid);
    for (std::size_t t = 0; t < cfg_.heads; ++t) {
      AttentionHeadParams hp;
      hp.wq = uniform_weight(hid, dh, rng);
      hp.wk = uniform_weight(hid, dh, rng);
      hp.wv = uniform_weight(hid, dh, rng);
      layer.heads.push_back(std::move(hp));
      layer.start_points.push_back(Tensor::scalar(initial_start_point(t), true));
    }
    layer.out_proj = make_linear(hid, hid, true, rng);
    if (cfg_.mpnn == MpnnKind::GcnParallel) {
      layer.gcn = make_linear(hid, hid, false, rng);
      layer.mix_norm = make_norm(hid);
    }
    layer.ffn_norm = make_norm(hid);
    layer.ffn_in = make_linear(hid, cfg_.ffn_width(), true, rng);
    layer.ffn_out = make_linear(cfg_.ffn_width(), hid, true, rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = make_norm(hid);
  head_ = make_linear(hid, task_.output_dim(), true, rng);
}

Tensor GradformerModel::encoder_layer(const EncoderLayer& layer, std::size_t index, const Tensor& h,
                                      const GraphBatch& batch, const ForwardOptions& opts) const {
  const std::size_t B = batch.batch_size, n = batch.n_max;
  const double eps = cfg_.layer_norm_eps;
  const Tensor hn = apply_norm(h, layer.attn_norm, eps);

  std::vector<Tensor> masks;
  if (cfg_.decay.enabled) masks = per_head_masks(batch.psi, cfg_.decay, layer.start_points, cfg_.heads);

  std::vector<Tensor> head_out;
  head_out.reserve(cfg_.heads);
  for (std::size_t t = 0; t < cfg_.heads; ++t) {
    const Tensor mask = masks.empty() ? Tensor() : masks[t];
    ExcludeMask exclude = batch.exclude;
    if (mask.defined() && cfg_.decay.zero_mode == ZeroMode::Exclusion) {
      // Diagonal stays in the support so no row degenerates.
      const auto mv = mask.values();
      for (std::size_t e = 0; e < mv.size(); ++e) {
        const std::size_t i = (e / n) % n, j = e % n;
        if (mv[e] == 0.0 && i != j) exclude[e] = 1;
      }
    }
    Tensor attn;
    head_out.push_back(masked_attention_head(hn, B, n, layer.heads[t], mask, exclude, cfg_.attention_dropout, opts,
                                             opts.record ? &attn : nullptr));
    if (opts.record) {
      opts.record->attention[index].push_back(attn.detach());
      opts.record->masks[index].push_back(mask.defined() ? mask.detach() : Tensor());
    }
  }
  const Tensor attended = layer.out_proj(concat_cols(head_out));
  SplitMix64 dummy(0);
  SplitMix64& rng = opts.rng ? *opts.rng : dummy;
  const bool drop = opts.training && cfg_.dropout > 0.0;
  if (drop && !opts.rng) throw ContractError("training-mode dropout needs an rng");
  Tensor mixed = add(h, dropout(attended, cfg_.dropout, rng, drop));
  if (cfg_.mpnn == MpnnKind::GcnParallel) {
    const Tensor local = add(h, dropout(gcn_branch(hn, batch.a_norm, layer.gcn, cfg_.gcn_activation), cfg_.dropout,
                                        rng, drop));
    mixed = apply_norm(add(mixed, local), layer.mix_norm, eps);
  }
  const Tensor ff = layer.ffn_out(relu(layer.ffn_in(apply_norm(mixed, layer.ffn_norm, eps))));
  return add(mixed, dropout(ff, cfg_.dropout, rng, drop));
}

Tensor GradformerModel::encode(const GraphBatch& batch, const ForwardOptions& opts) const {
  if (batch.feature_dim != d_in_ + cfg_.effective_pe_dim()) {
    throw DimensionError("batch feature width " + std::to_string(batch.feature_dim) + " does not match model input " +
                         std::to_string(d_in_ + cfg_.effective_pe_dim()));
  }
  if (opts.record) {
    opts.record->attention.assign(cfg_.layers, {});
    opts.record->masks.assign(cfg_.layers, {});
  }
  Tensor h = input_proj_(batch.features);
  for (std::size_t l = 0; l < layers_.size(); ++l) h = encoder_layer(layers_[l], l, h, batch, opts);
  return h;
}

Tensor GradformerModel::readout(const Tensor& embeddings, const GraphBatch& batch) const {
  const Tensor normed = apply_norm(embeddings, final_norm_, cfg_.layer_norm_eps);
  if (task_.is_graph_level()) return head_(mean_pool_rows(normed, batch.pool_groups));
  return head_(select_rows(normed, batch.valid_rows));
}

Tensor GradformerModel::forward(const GraphBatch& batch, const ForwardOptions& opts) const {
  return readout(encode(batch, opts), batch);
}

std::vector<NamedParameter> GradformerModel::parameters() const {
  std::vector<NamedParameter> out;
  auto add_linear = [&](const std::string& prefix, const Linear& l) {
    out.push_back({prefix + ".weight", l.weight});
    if (l.bias.defined()) out.push_back({prefix + ".bias", l.bias});
  };
  auto add_norm = [&](const std::string& prefix, const LayerNormParams& p) {
    out.push_back({prefix + ".gain", p.gain});
    out.push_back({prefix + ".bias", p.bias});
  };
  add_linear("input_proj", input_proj_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const std::string p = "layers." + std::to_string(l);
    add_norm(p + ".attn_norm", layer.attn_norm);
    for (std::size_t t = 0; t < layer.heads.size(); ++t) {
      const std::string hp = p + ".head." + std::to_string(t);
      out.push_back({hp + ".wq", layer.heads[t].wq});
      out.push_back({hp + ".wk", layer.heads[t].wk});
      out.push_back({hp + ".wv", layer.heads[t].wv});
      out.push_back({hp + ".sp", layer.start_points[t]});
    }
    add_linear(p + ".out_proj", layer.out_proj);
    if (cfg_.mpnn == MpnnKind::GcnParallel) {
      add_linear(p + ".gcn", layer.gcn);
      add_norm(p + ".mix_norm", layer.mix_norm);
    }
    add_norm(p + ".ffn_norm", layer.ffn_norm);
    add_linear(p + ".ffn_in", layer.ffn_in);
    add_linear(p + ".ffn_out", layer.ffn_out);
  }
  add_norm("final_norm", final_norm_);
  add_linear("head", head_);
  return out;
}

std::size_t GradformerModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

}  // namespace gradmask
