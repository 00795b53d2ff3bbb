#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gradmask/batch.hpp"
#include "gradmask/decay_mask.hpp"
#include "gradmask/graph.hpp"
#include "gradmask/rng.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask {

enum class PeKind { None, Rwse };
enum class MpnnKind { None, GcnParallel };
enum class Activation { Sigmoid, Relu };

std::string to_string(PeKind pe);
PeKind pe_kind_from_string(const std::string& name);
std::string to_string(MpnnKind mpnn);
MpnnKind mpnn_kind_from_string(const std::string& name);
std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  double ffn_multiplier = 2.0;
  double dropout = 0.0;
  double attention_dropout = 0.5;
  PeKind pe = PeKind::Rwse;
  std::size_t pe_dim = 20;
  MpnnKind mpnn = MpnnKind::None;
  Activation gcn_activation = Activation::Sigmoid;
  IndexKind index = IndexKind::SPH;
  double layer_norm_eps = 1e-5;
  DecayConfig decay;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t ffn_width() const;
  std::size_t effective_pe_dim() const { return pe == PeKind::Rwse ? pe_dim : 0; }
  /// Throws ConfigError.
  void validate() const;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], undefined when the map has no bias

  Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct AttentionHeadParams {
  Tensor wq, wk, wv;  // [hidden, head_dim]
};

struct EncoderLayer {
  LayerNormParams attn_norm;
  std::vector<AttentionHeadParams> heads;
  std::vector<Tensor> start_points;  // one [1] tensor per head
  Linear out_proj;
  Linear gcn;  // only with MpnnKind::GcnParallel
  LayerNormParams mix_norm;
  LayerNormParams ffn_norm;
  Linear ffn_in, ffn_out;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Attention matrices and masks captured during a forward pass, indexed
/// [layer][head], each [B, n_max, n_max]. Masks are empty when disabled.
struct AttentionRecord {
  std::vector<std::vector<Tensor>> attention;
  std::vector<std::vector<Tensor>> masks;
};

struct ForwardOptions {
  bool training = false;
  SplitMix64* rng = nullptr;  // required when training with dropout
  AttentionRecord* record = nullptr;
};

/// One decay-masked attention head over a padded batch.
/// h: [B * n, hidden]; mask: [B, n, n] or undefined for no mask.
/// Returns [B * n, head_dim]. `attention_out`, when given, receives the
/// post-softmax attention (before attention dropout).
Tensor masked_attention_head(const Tensor& h, std::size_t batch, std::size_t n, const AttentionHeadParams& params,
                             const Tensor& mask, const ExcludeMask& exclude, double attention_dropout,
                             const ForwardOptions& opts, Tensor* attention_out = nullptr);

/// activation(A_norm H W) with A_norm [B, n, n] and h [B * n, hidden].
Tensor gcn_branch(const Tensor& h, const Tensor& a_norm, const Linear& w, Activation act);

class GradformerModel {
 public:
  GradformerModel(ModelConfig cfg, TaskSpec task, std::size_t d_in, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const TaskSpec& task() const { return task_; }
  std::size_t input_dim() const { return d_in_; }

  /// Node embeddings [B * n_max, hidden]; padded rows carry values that no
  /// valid row depends on.
  Tensor encode(const GraphBatch& batch, const ForwardOptions& opts = {}) const;
  /// Graph tasks: masked mean pool then affine head -> [B, out].
  /// Node tasks: affine head on valid rows -> [valid nodes, out].
  Tensor readout(const Tensor& embeddings, const GraphBatch& batch) const;
  Tensor forward(const GraphBatch& batch, const ForwardOptions& opts = {}) const;

  /// Every trainable tensor in a fixed declaration order.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;

  std::vector<EncoderLayer>& layers() { return layers_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }

 private:
  Tensor encoder_layer(const EncoderLayer& layer, std::size_t index, const Tensor& h, const GraphBatch& batch,
                       const ForwardOptions& opts) const;

  ModelConfig cfg_;
  TaskSpec task_;
  std::size_t d_in_;
  Linear input_proj_;
  std::vector<EncoderLayer> layers_;
  LayerNormParams final_norm_;
  Linear head_;
};

}  // namespace gradmask
