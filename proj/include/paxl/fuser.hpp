#pragma once

#include <vector>

#include "paxl/checkpoint.hpp"
#include "paxl/rng.hpp"
#include "paxl/tensor.hpp"

namespace paxl {

// Single cross-attention layer where the pooled backbone feature queries the
// patched tokens, mirroring the patcher's block structure; the fused output
// is re-normalized so it feeds the same cosine heads as every other path.
struct Fuser {
  std::size_t model_dim = 0;
  TensorPtr w_q, w_k, w_v, w_o;              // d x d
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // d->4d->d
  TensorPtr ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  static Fuser init(std::size_t model_dim, SplitRng rng);

  struct Output {
    TensorPtr fused;      // d, normalized
    TensorPtr attention;  // 1 x l weights over the patched tokens
  };
  Output forward(const TensorPtr& pooled_visual, const TensorPtr& patched_tokens) const;

  std::vector<TensorPtr> trainable() const;
  std::size_t trainable_count() const;
  std::vector<TensorPtr*> param_slots();
  NamedTensors named(const std::string& prefix = "fuser.") const;
  void load(const NamedTensors& tensors, const std::string& prefix = "fuser.");
};

// Alpha blending with a single learnable logit: alpha = sigmoid(a),
// fused = alpha * pooled_backbone + (1 - alpha) * pooled_patcher.
struct SideTuner {
  TensorPtr a;  // scalar logit

  static SideTuner init();

  TensorPtr blend(const TensorPtr& pooled_visual, const TensorPtr& pooled_patched) const;
  double alpha() const;

  std::vector<TensorPtr> trainable() const { return {a}; }
  NamedTensors named(const std::string& prefix = "sidetune.") const;
  void load(const NamedTensors& tensors, const std::string& prefix = "sidetune.");
};

// Argmax of the elementwise sum of two class-probability vectors; ties break
// to the lowest index. Inputs must each sum to 1 within 1e-6.
std::size_t ensemble_predict(const std::vector<double>& p_a, const std::vector<double>& p_b);

}  // namespace paxl
