#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedfusion/alignment.hpp"
#include "fedfusion/param_vector.hpp"
#include "fedfusion/tensor.hpp"

namespace fedfusion::fusion {

enum class Modality { audio, text, both };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct FusionConfig {
  int hidden_dim = 768;
  int heads = 12;
  int max_len = 200;
  int mlp_hidden = 768;
  int classes = 2;
  bool include_ffn = false;
  int ffn_hidden = 0;  // 0 selects 4 * hidden_dim
  Modality modality = Modality::both;

  int head_dim() const { return hidden_dim / heads; }
  int ffn_dim() const { return ffn_hidden > 0 ? ffn_hidden : 4 * hidden_dim; }
  void validate() const;
};

// Trainable parameters. Weight matrices are out_features x in_features.
// The attention/gate block exists only for Modality::both.
struct FusionParams {
  Tensor2 w_q, w_k, w_v, w_o;          // hidden x hidden
  Tensor2 w_g;                         // hidden x hidden
  std::vector<double> b_g;             // hidden
  Tensor2 w_f1, w_f2;                  // ffn x hidden, hidden x ffn (include_ffn only)
  std::vector<double> b_f1, b_f2;
  Tensor2 w_a;                         // 1 x hidden
  double b_a = 0.0;
  Tensor2 w_m1;                        // mlp_hidden x hidden
  std::vector<double> b_m1;
  Tensor2 w_m2;                        // classes x mlp_hidden
  std::vector<double> b_m2;
};

// One entry of the canonical flat-parameter layout.
struct LayoutEntry {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
};

// Canonical ordering: w_q, w_k, w_v, w_o, w_g, b_g, [w_f1, b_f1, w_f2, b_f2],
// w_a, b_a, w_m1, b_m1, w_m2, b_m2, each row-major. Single-modality models
// start at w_a.
std::vector<LayoutEntry> parameter_layout(const FusionConfig& cfg);
std::size_t param_count(const FusionConfig& cfg);

FusionParams zero_params(const FusionConfig& cfg);
// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
FusionParams init_params(const FusionConfig& cfg, std::uint64_t seed);

ParamVector flatten(const FusionParams& p, const FusionConfig& cfg);
FusionParams load(const ParamVector& v, const FusionConfig& cfg);

// Cached intermediates needed by backward.
struct ForwardTrace {
  Modality modality = Modality::both;
  int n = 0;  // active token rows
  Tensor2 a, t;                       // active input slices
  std::vector<std::uint8_t> mask_a, mask_t;
  Tensor2 q, k, v;                    // projected, n x hidden
  std::vector<Tensor2> attn;          // per head, n x n, rows sum to 1 over unmasked keys
  Tensor2 concat;                     // heads concatenated, pre-w_o
  Tensor2 h_att;
  Tensor2 gate;                       // G, in (0,1)
  Tensor2 h;                          // gated blend
  Tensor2 ffn_act;                    // relu activations (include_ffn only)
  Tensor2 h_post;                     // pooling input
  std::vector<std::uint8_t> pool_mask;
  std::vector<double> alpha;          // pooling scores
  std::vector<double> pool_w;         // pooling weights, sum 1 over unmasked
  std::vector<double> pooled;         // h, length hidden
  std::vector<double> mlp_z;          // relu(w_m1 pooled + b_m1)
  std::vector<double> logits;
};

// Scaled dot-product multi-head attention; queries from a, keys/values from
// t, masked text positions excluded from every softmax row.
Tensor2 cross_attention(const Tensor2& a, const Tensor2& t, std::span<const std::uint8_t> mask_t,
                        const FusionParams& p, const FusionConfig& cfg);

// H = G (*) h_att + (1 - G) (*) a with G = sigmoid(w_g h_att + b_g) row-wise.
Tensor2 gate_blend(const Tensor2& a, const Tensor2& h_att, const FusionParams& p);

// alpha_i = w_a H_i + b_a, w = masked softmax(alpha), returns sum_i w_i H_i.
std::vector<double> attention_pool(const Tensor2& h, std::span<const std::uint8_t> mask,
                                   const FusionParams& p);

std::pair<std::vector<double>, ForwardTrace> forward(const align::AlignedSample& sample,
                                                     const FusionParams& p,
                                                     const FusionConfig& cfg);

// Gradient of cross_entropy(logits, label) w.r.t. every parameter, in the
// canonical flat layout. Throws on a trace that does not match the params.
ParamVector backward(const ForwardTrace& trace, int label, const FusionParams& p,
                     const FusionConfig& cfg);

// Convenience: loss and flat gradient for one sample at flat params.
std::pair<double, ParamVector> loss_and_grad(const align::AlignedSample& sample,
                                             const ParamVector& flat, const FusionConfig& cfg);

}  // namespace fedfusion::fusion
