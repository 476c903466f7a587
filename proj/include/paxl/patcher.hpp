#pragma once

#include <string>
#include <vector>

#include "paxl/backbone.hpp"
#include "paxl/checkpoint.hpp"
#include "paxl/rng.hpp"
#include "paxl/tensor.hpp"

namespace paxl {

enum class PatcherVariant { kPerceiver, kTransformer };

std::string to_string(PatcherVariant v);
PatcherVariant patcher_variant_from_string(const std::string& s);

struct PatcherDims {
  std::size_t latents = 8;   // l (perceiver only)
  std::size_t token_dim;     // D
  std::size_t model_dim;     // d
  std::size_t token_count;   // P
  std::size_t frames;        // N (drives the temporal position table)
  std::size_t heads = 1;
};

// Fixed sinusoidal position table (P x D) over the frame index; patches
// within a frame share the same row pattern. Without it the attention
// blocks would be permutation-invariant over frames and reversal would be
// unlearnable.
std::vector<double> temporal_position_table(const PatcherDims& dims);

// Fixed attention-logit bias giving each latent its own early-vs-late frame
// tilt (alternating signs, growing magnitudes). Additive token encodings
// alone vanish inside the attention bilinear at small init, so every latent
// carries a structural order readout instead; frame-constant content is
// unaffected by the tilt.
std::vector<double> latent_frame_bias(const PatcherDims& dims);

// Relative frame tilt for self-attention (token_count x token_count).
std::vector<double> relative_frame_bias(const PatcherDims& dims);

// Single cross-attention layer from l learnable latents onto the backbone
// tokens, pre-norm residual arrangement, then a two-layer feed-forward.
// Output is l x d regardless of P.
struct PerceiverPatcher {
  PatcherDims dims;
  TensorPtr latents;              // l x d
  TensorPtr w_q, w_k, w_v, w_o;   // d x d, D x d, D x d, d x d
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // d->4d->d
  TensorPtr ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  TensorPtr position;   // P x D, fixed (not trainable)
  TensorPtr attn_bias;  // l x P, fixed frame tilts

  static PerceiverPatcher init(const PatcherDims& dims, SplitRng rng);

  TensorPtr forward(const TensorPtr& visual_tokens) const;  // l x d

  std::vector<TensorPtr> trainable() const;
  std::size_t trainable_count() const;
  // Mutable slots in trainable() order; lets tests swap one parameter.
  std::vector<TensorPtr*> param_slots();
  NamedTensors named(const std::string& prefix = "patcher.") const;
  void load(const NamedTensors& tensors, const std::string& prefix = "patcher.");
};

// Single self-attention layer over the P tokens at width D, then a
// feed-forward and a final projection to d. Output keeps all P rows.
struct TransformerPatcher {
  PatcherDims dims;
  TensorPtr w_q, w_k, w_v, w_o;   // D x D
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // D->4D->D
  TensorPtr ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  TensorPtr out_proj;   // D x d
  TensorPtr position;   // P x D, fixed
  TensorPtr attn_bias;  // P x P, fixed relative frame tilt

  static TransformerPatcher init(const PatcherDims& dims, SplitRng rng);

  // diag_zero_attention replaces the attention weights with zeros, reducing
  // the block to a per-token feed-forward (diagnostic only).
  TensorPtr forward(const TensorPtr& visual_tokens, bool diag_zero_attention = false) const;

  std::vector<TensorPtr> trainable() const;
  std::size_t trainable_count() const;
  std::vector<TensorPtr*> param_slots();
  NamedTensors named(const std::string& prefix = "patcher.") const;
  void load(const NamedTensors& tensors, const std::string& prefix = "patcher.");
};

// Max over token rows of cosine(row, text). Ties break to the lowest row
// index; the gradient flows only to the winning row.
TensorPtr sim_max_tokens(const TensorPtr& tokens, const TensorPtr& text);

// Mean-pool token rows, then cosine with the text vector.
TensorPtr sim_mean_pooled(const TensorPtr& tokens, const TensorPtr& text);

}  // namespace paxl
