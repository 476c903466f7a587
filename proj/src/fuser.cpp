#include "paxl/fuser.hpp"

#include <cmath>

#include "paxl/errors.hpp"

namespace paxl {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

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

Fuser Fuser::init(std::size_t model_dim, SplitRng rng) {
  const std::size_t d = model_dim;
  Fuser f;
  f.model_dim = d;
  f.w_q = Tensor::randn({d, d}, rng, kInitStd, true);
  f.w_k = Tensor::randn({d, d}, rng, kInitStd, true);
  f.w_v = Tensor::randn({d, d}, rng, kInitStd, true);
  f.w_o = Tensor::randn({d, d}, rng, kInitStd, true);
  f.ffn_w1 = Tensor::randn({d, 4 * d}, rng, kInitStd, true);
  f.ffn_b1 = Tensor::zeros({4 * d}, true);
  f.ffn_w2 = Tensor::randn({4 * d, d}, rng, kInitStd, true);
  f.ffn_b2 = Tensor::zeros({d}, true);
  f.ln1_gamma = Tensor::make({d}, std::vector<double>(d, 1.0), true);
  f.ln1_beta = Tensor::zeros({d}, true);
  f.ln2_gamma = Tensor::make({d}, std::vector<double>(d, 1.0), true);
  f.ln2_beta = Tensor::zeros({d}, true);
  return f;
}

Fuser::Output Fuser::forward(const TensorPtr& pooled_visual,
                             const TensorPtr& patched_tokens) const {
  if (pooled_visual->rank() != 1 || pooled_visual->shape[0] != model_dim)
    throw ShapeError("fuser: query must be a length-" + std::to_string(model_dim) + " vector");
  if (patched_tokens->rank() != 2 || patched_tokens->shape[1] != model_dim)
    throw ShapeError("fuser: tokens " + shape_str(patched_tokens->shape) + " incompatible with d=" +
                     std::to_string(model_dim));
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(model_dim));

  auto qn = layer_norm(pooled_visual, ln1_gamma, ln1_beta, kLnEps);
  auto q = matmul(as_row(qn), w_q);                             // 1 x d
  auto k = matmul(patched_tokens, w_k);                         // l x d
  auto v = matmul(patched_tokens, w_v);                         // l x d
  auto attn = softmax_rows(scale(matmul_nt(q, k), att_scale));  // 1 x l
  auto ctx = matmul(matmul(attn, v), w_o);                      // 1 x d
  auto res = add(as_row(pooled_visual), ctx);                   // residual from the query
  auto fn = layer_norm(res, ln2_gamma, ln2_beta, kLnEps);
  auto h = gelu(add_row_broadcast(matmul(fn, ffn_w1), ffn_b1));
  auto ff = add_row_broadcast(matmul(h, ffn_w2), ffn_b2);
  auto out = add(res, ff);

  Output result;
  result.attention = attn;
  result.fused = l2_normalize(row(out, 0));
  return result;
}

std::vector<TensorPtr> Fuser::trainable() const {
  return {w_q, w_k, w_v, w_o, ffn_w1, ffn_b1, ffn_w2, ffn_b2,
          ln1_gamma, ln1_beta, ln2_gamma, ln2_beta};
}

std::size_t Fuser::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t->size();
  return n;
}

std::vector<TensorPtr*> Fuser::param_slots() {
  return {&w_q, &w_k, &w_v, &w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2,
          &ln1_gamma, &ln1_beta, &ln2_gamma, &ln2_beta};
}

NamedTensors Fuser::named(const std::string& prefix) const {
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
  return out;
}

void Fuser::load(const NamedTensors& tensors, const std::string& prefix) {
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

SideTuner SideTuner::init() {
  SideTuner s;
  s.a = Tensor::scalar(0.0, true);
  return s;
}

TensorPtr SideTuner::blend(const TensorPtr& pooled_visual,
                           const TensorPtr& pooled_patched) const {
  if (pooled_visual->shape != pooled_patched->shape)
    throw ShapeError("side_tune_blend: feature shapes differ");
  auto alpha = sigmoid(a);
  auto one_minus = add_const(scale(alpha, -1.0), 1.0);
  return add(scale_by(pooled_visual, alpha), scale_by(pooled_patched, one_minus));
}

double SideTuner::alpha() const { return 1.0 / (1.0 + std::exp(-a->values[0])); }

NamedTensors SideTuner::named(const std::string& prefix) const {
  NamedTensors out;
  out[prefix + "a"] = a;
  return out;
}

void SideTuner::load(const NamedTensors& tensors, const std::string& prefix) {
  load_into(tensors, prefix + "a", a);
}

std::size_t ensemble_predict(const std::vector<double>& p_a, const std::vector<double>& p_b) {
  if (p_a.size() != p_b.size() || p_a.empty())
    throw ShapeError("ensemble_predict: probability vectors must match and be non-empty");
  for (const auto* p : {&p_a, &p_b}) {
    double s = 0;
    for (double x : *p) s += x;
    if (std::abs(s - 1.0) > 1e-6)
      throw NumericError("ensemble_predict: input does not sum to 1 within 1e-6");
  }
  std::size_t best = 0;
  double best_v = p_a[0] + p_b[0];
  for (std::size_t i = 1; i < p_a.size(); ++i) {
    const double v = p_a[i] + p_b[i];
    if (v > best_v) {  // strict: ties keep the lowest index
      best_v = v;
      best = i;
    }
  }
  return best;
}

}  // namespace paxl
