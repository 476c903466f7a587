#include "paxl/patcher.hpp"

#include <cmath>

#include "paxl/errors.hpp"

namespace paxl {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;
constexpr double kPositionAmplitude = 2.0;
constexpr double kLatentTiltBase = 1.0;   // per-latent early/late logit tilt
constexpr double kRelativeTilt = 2.0;     // self-attention forward-looking tilt

TensorPtr ones(std::size_t n) { return Tensor::make({n}, std::vector<double>(n, 1.0), true); }

TensorPtr ffn(const TensorPtr& x, const TensorPtr& w1, const TensorPtr& b1,
              const TensorPtr& w2, const TensorPtr& b2) {
  auto h = gelu(add_row_broadcast(matmul(x, w1), b1));
  return add_row_broadcast(matmul(h, w2), b2);
}

void load_into(const NamedTensors& src, const std::string& name, TensorPtr& dst) {
  auto it = src.find(name);
  if (it == src.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
  if (it->second->shape != dst->shape)
    throw CheckpointError("checkpoint: tensor '" + name + "' has shape " +
                          shape_str(it->second->shape) + ", expected " + shape_str(dst->shape));
  dst->values = it->second->values;
  dst->zero_grad();
}

}  // namespace

std::string to_string(PatcherVariant v) {
  return v == PatcherVariant::kPerceiver ? "perceiver" : "transformer";
}

PatcherVariant patcher_variant_from_string(const std::string& s) {
  if (s == "perceiver") return PatcherVariant::kPerceiver;
  if (s == "transformer") return PatcherVariant::kTransformer;
  throw ConfigError("train.variant: unknown variant '" + s + "'");
}

std::vector<double> temporal_position_table(const PatcherDims& dims) {
  const std::size_t P = dims.token_count, D = dims.token_dim;
  const std::size_t patches = P / dims.frames;
  std::vector<double> table(P * D, 0.0);
  for (std::size_t f = 0; f < dims.frames; ++f) {
    for (std::size_t j = 0; j < D; j += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(D));
      const double angle = static_cast<double>(f) * rate;
      for (std::size_t p = 0; p < patches; ++p) {
        double* row = &table[(f * patches + p) * D];
        row[j] = kPositionAmplitude * std::sin(angle);
        if (j + 1 < D) row[j + 1] = kPositionAmplitude * std::cos(angle);
      }
    }
  }
  return table;
}

std::vector<double> latent_frame_bias(const PatcherDims& dims) {
  const std::size_t l = dims.latents, P = dims.token_count;
  const std::size_t patches = P / dims.frames;
  std::vector<double> bias(l * P, 0.0);
  for (std::size_t r = 0; r < l; ++r) {
    const double sign = r % 2 == 0 ? 1.0 : -1.0;
    const double tilt = sign * kLatentTiltBase * (1.0 + static_cast<double>((r / 2) % 4));
    for (std::size_t f = 0; f < dims.frames; ++f) {
      const double ramp =
          static_cast<double>(f) / (static_cast<double>(dims.frames) - 1.0) - 0.5;
      for (std::size_t p = 0; p < patches; ++p) bias[r * P + f * patches + p] = tilt * ramp;
    }
  }
  return bias;
}

std::vector<double> relative_frame_bias(const PatcherDims& dims) {
  const std::size_t P = dims.token_count;
  const std::size_t patches = P / dims.frames;
  std::vector<double> bias(P * P, 0.0);
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b) {
      const double fa = static_cast<double>(a / patches);
      const double fb = static_cast<double>(b / patches);
      bias[a * P + b] =
          kRelativeTilt * (fb - fa) / (static_cast<double>(dims.frames) - 1.0);
    }
  return bias;
}

PerceiverPatcher PerceiverPatcher::init(const PatcherDims& dims, SplitRng rng) {
  if (dims.latents >= dims.token_count || dims.model_dim > dims.token_dim)
    throw ConfigError("patcher: bottleneck requires l < P and d <= D");
  const std::size_t l = dims.latents, D = dims.token_dim, d = dims.model_dim;
  PerceiverPatcher p;
  p.dims = dims;
  p.latents = Tensor::randn({l, d}, rng, kInitStd, true);
  p.w_q = Tensor::randn({d, d}, rng, kInitStd, true);
  p.w_k = Tensor::randn({D, d}, rng, kInitStd, true);
  p.w_v = Tensor::randn({D, d}, rng, kInitStd, true);
  p.w_o = Tensor::randn({d, d}, rng, kInitStd, true);
  p.ffn_w1 = Tensor::randn({d, 4 * d}, rng, kInitStd, true);
  p.ffn_b1 = Tensor::zeros({4 * d}, true);
  p.ffn_w2 = Tensor::randn({4 * d, d}, rng, kInitStd, true);
  p.ffn_b2 = Tensor::zeros({d}, true);
  p.ln1_gamma = ones(d);
  p.ln1_beta = Tensor::zeros({d}, true);
  p.ln2_gamma = ones(d);
  p.ln2_beta = Tensor::zeros({d}, true);
  p.position = Tensor::make({dims.token_count, D}, temporal_position_table(dims));
  p.attn_bias = Tensor::make({l, dims.token_count}, latent_frame_bias(dims));
  return p;
}

TensorPtr PerceiverPatcher::forward(const TensorPtr& visual_tokens) const {
  if (visual_tokens->rank() != 2 || visual_tokens->shape[0] != dims.token_count ||
      visual_tokens->shape[1] != dims.token_dim)
    throw ShapeError("perceiver: tokens " + shape_str(visual_tokens->shape) + ", expected [" +
                     std::to_string(dims.token_count) + "x" + std::to_string(dims.token_dim) +
                     "]");
  const std::size_t heads = dims.heads;
  const std::size_t dh = dims.model_dim / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Position rows enter the key path only: frame-selective attention from
  // the start without polluting the content carried by the values.
  auto k = matmul(add(visual_tokens, position), w_k);
  auto v = matmul(visual_tokens, w_v);
  auto q = matmul(layer_norm(latents, ln1_gamma, ln1_beta, kLnEps), w_q);
  // Heads carry the frame-tilt bias with alternating sign, so each latent
  // holds matched early- and late-leaning views whose shared content cancels
  // and whose difference is a temporal-order readout.
  std::vector<TensorPtr> ctx_parts;
  ctx_parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = cols(q, h * dh, (h + 1) * dh);
    auto kh = cols(k, h * dh, (h + 1) * dh);
    auto vh = cols(v, h * dh, (h + 1) * dh);
    auto logits = scale(matmul_nt(qh, kh), att_scale);
    auto biased = add(logits, scale(attn_bias, h % 2 == 0 ? 1.0 : -1.0));
    ctx_parts.push_back(matmul(softmax_rows(biased), vh));
  }
  auto ctx = matmul(heads == 1 ? ctx_parts[0] : concat_cols(ctx_parts), w_o);
  auto res = add(latents, ctx);
  auto out = add(res, ffn(layer_norm(res, ln2_gamma, ln2_beta, kLnEps), ffn_w1, ffn_b1,
                          ffn_w2, ffn_b2));
  return out;
}

std::vector<TensorPtr> PerceiverPatcher::trainable() const {
  return {latents, w_q, w_k, w_v, w_o, ffn_w1, ffn_b1, ffn_w2, ffn_b2,
          ln1_gamma, ln1_beta, ln2_gamma, ln2_beta};
}

std::size_t PerceiverPatcher::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t->size();
  return n;
}

std::vector<TensorPtr*> PerceiverPatcher::param_slots() {
  return {&latents, &w_q, &w_k, &w_v, &w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2,
          &ln1_gamma, &ln1_beta, &ln2_gamma, &ln2_beta};
}

NamedTensors PerceiverPatcher::named(const std::string& prefix) const {
  NamedTensors out;
  out[prefix + "latents"] = latents;
  out[prefix + "w_q"] = w_q;
  out[prefix + "w_k"] = w_k;
  out[prefix + "w_v"] = w_v;
  out[prefix + "w_o"] = w_o;
  out[prefix + "ffn_w1"] = ffn_w1;
  out[prefix + "ffn_b1"] = ffn_b1;
  out[prefix + "ffn_w2"] = ffn_w2;
  out[prefix + "ffn_b2"] = ffn_b2;
  out[prefix + "ln1_gamma"] = ln1_gamma;
  out[prefix + "ln1_beta"] = ln1_beta;
  out[prefix + "ln2_gamma"] = ln2_gamma;
  out[prefix + "ln2_beta"] = ln2_beta;
  return out;
}

void PerceiverPatcher::load(const NamedTensors& tensors, const std::string& prefix) {
  load_into(tensors, prefix + "latents", latents);
  load_into(tensors, prefix + "w_q", w_q);
  load_into(tensors, prefix + "w_k", w_k);
  load_into(tensors, prefix + "w_v", w_v);
  load_into(tensors, prefix + "w_o", w_o);
  load_into(tensors, prefix + "ffn_w1", ffn_w1);
  load_into(tensors, prefix + "ffn_b1", ffn_b1);
  load_into(tensors, prefix + "ffn_w2", ffn_w2);
  load_into(tensors, prefix + "ffn_b2", ffn_b2);
  load_into(tensors, prefix + "ln1_gamma", ln1_gamma);
  load_into(tensors, prefix + "ln1_beta", ln1_beta);
  load_into(tensors, prefix + "ln2_gamma", ln2_gamma);
  load_into(tensors, prefix + "ln2_beta", ln2_beta);
}

TransformerPatcher TransformerPatcher::init(const PatcherDims& dims, SplitRng rng) {
  const std::size_t D = dims.token_dim, d = dims.model_dim;
  TransformerPatcher t;
  t.dims = dims;
  t.w_q = Tensor::randn({D, D}, rng, kInitStd, true);
  t.w_k = Tensor::randn({D, D}, rng, kInitStd, true);
  t.w_v = Tensor::randn({D, D}, rng, kInitStd, true);
  t.w_o = Tensor::randn({D, D}, rng, kInitStd, true);
  t.ffn_w1 = Tensor::randn({D, 4 * D}, rng, kInitStd, true);
  t.ffn_b1 = Tensor::zeros({4 * D}, true);
  t.ffn_w2 = Tensor::randn({4 * D, D}, rng, kInitStd, true);
  t.ffn_b2 = Tensor::zeros({D}, true);
  t.ln1_gamma = ones(D);
  t.ln1_beta = Tensor::zeros({D}, true);
  t.ln2_gamma = ones(D);
  t.ln2_beta = Tensor::zeros({D}, true);
  t.out_proj = Tensor::randn({D, d}, rng, kInitStd, true);
  t.position = Tensor::make({dims.token_count, D}, temporal_position_table(dims));
  t.attn_bias = Tensor::make({dims.token_count, dims.token_count}, relative_frame_bias(dims));
  return t;
}

TensorPtr TransformerPatcher::forward(const TensorPtr& visual_tokens,
                                      bool diag_zero_attention) const {
  if (visual_tokens->rank() != 2 || visual_tokens->shape[0] != dims.token_count ||
      visual_tokens->shape[1] != dims.token_dim)
    throw ShapeError("transformer: tokens " + shape_str(visual_tokens->shape) +
                     ", expected [" + std::to_string(dims.token_count) + "x" +
                     std::to_string(dims.token_dim) + "]");
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dims.token_dim / dims.heads));

  auto xk = layer_norm(add(visual_tokens, position), ln1_gamma, ln1_beta, kLnEps);
  auto xn = layer_norm(visual_tokens, ln1_gamma, ln1_beta, kLnEps);
  auto q = matmul(xk, w_q);
  auto k = matmul(xk, w_k);
  auto v = matmul(xn, w_v);
  auto attn = softmax_rows(add(scale(matmul_nt(q, k), att_scale), attn_bias));
  if (diag_zero_attention) attn = scale(attn, 0.0);
  auto ctx = matmul(matmul(attn, v), w_o);
  auto res = add(visual_tokens, ctx);
  auto out = add(res, ffn(layer_norm(res, ln2_gamma, ln2_beta, kLnEps), ffn_w1, ffn_b1,
                          ffn_w2, ffn_b2));
  return matmul(out, out_proj);
}

std::vector<TensorPtr> TransformerPatcher::trainable() const {
  return {w_q, w_k, w_v, w_o, ffn_w1, ffn_b1, ffn_w2, ffn_b2,
          ln1_gamma, ln1_beta, ln2_gamma, ln2_beta, out_proj};
}

std::size_t TransformerPatcher::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t->size();
  return n;
}

std::vector<TensorPtr*> TransformerPatcher::param_slots() {
  return {&w_q, &w_k, &w_v, &w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2,
          &ln1_gamma, &ln1_beta, &ln2_gamma, &ln2_beta, &out_proj};
}

NamedTensors TransformerPatcher::named(const std::string& prefix) const {
  NamedTensors out;
  out[prefix + "w_q"] = w_q;
  out[prefix + "w_k"] = w_k;
  out[prefix + "w_v"] = w_v;
  out[prefix + "w_o"] = w_o;
  out[prefix + "ffn_w1"] = ffn_w1;
  out[prefix + "ffn_b1"] = ffn_b1;
  out[prefix + "ffn_w2"] = ffn_w2;
  out[prefix + "ffn_b2"] = ffn_b2;
  out[prefix + "ln1_gamma"] = ln1_gamma;
  out[prefix + "ln1_beta"] = ln1_beta;
  out[prefix + "ln2_gamma"] = ln2_gamma;
  out[prefix + "ln2_beta"] = ln2_beta;
  out[prefix + "out_proj"] = out_proj;
  return out;
}

void TransformerPatcher::load(const NamedTensors& tensors, const std::string& prefix) {
  load_into(tensors, prefix + "w_q", w_q);
  load_into(tensors, prefix + "w_k", w_k);
  load_into(tensors, prefix + "w_v", w_v);
  load_into(tensors, prefix + "w_o", w_o);
  load_into(tensors, prefix + "ffn_w1", ffn_w1);
  load_into(tensors, prefix + "ffn_b1", ffn_b1);
  load_into(tensors, prefix + "ffn_w2", ffn_w2);
  load_into(tensors, prefix + "ffn_b2", ffn_b2);
  load_into(tensors, prefix + "ln1_gamma", ln1_gamma);
  load_into(tensors, prefix + "ln1_beta", ln1_beta);
  load_into(tensors, prefix + "ln2_gamma", ln2_gamma);
  load_into(tensors, prefix + "ln2_beta", ln2_beta);
  load_into(tensors, prefix + "out_proj", out_proj);
}

TensorPtr sim_max_tokens(const TensorPtr& tokens, const TensorPtr& text) {
  if (tokens->rank() != 2 || tokens->shape[0] == 0)
    throw ShapeError("sim_max_tokens: empty or non-matrix token input");
  std::vector<TensorPtr> sims;
  sims.reserve(tokens->shape[0]);
  for (std::size_t r = 0; r < tokens->shape[0]; ++r)
    sims.push_back(cosine_sim(row(tokens, r), text));
  return max_scalars(sims);
}

TensorPtr sim_mean_pooled(const TensorPtr& tokens, const TensorPtr& text) {
  if (tokens->rank() != 2 || tokens->shape[0] == 0)
    throw ShapeError("sim_mean_pooled: empty or non-matrix token input");
  return cosine_sim(mean_rows(tokens), text);
}

}  // namespace paxl
