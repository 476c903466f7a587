#include "paxl/verification.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "paxl/fuser.hpp"
#include "paxl/gradcheck.hpp"
#include "paxl/objectives.hpp"
#include "paxl/patcher.hpp"
#include "paxl/rng.hpp"
#include "paxl/tensor.hpp"

namespace paxl {

namespace {

// Scalarize a tensor with a fixed random weighting so every output entry
// influences the loss.
TensorPtr weighted_sum(const TensorPtr& t, std::uint64_t seed) {
  SplitRng rng(seed);
  std::vector<double> w(t->size());
  for (auto& x : w) x = rng.next_gaussian();
  return sum(mul(t, Tensor::make(t->shape, std::move(w))));
}

using PointFn = std::function<TensorPtr(const TensorPtr&)>;

// Blocks are checked at a healthy random operating point: near the tiny
// Gaussian init most partial derivatives sit at the 1e-8 denominator floor,
// where central differences cannot resolve 1e-5 relative error in doubles.
template <typename Block>
void randomize_params(Block& block, double sigma, std::uint64_t seed) {
  SplitRng rng(seed);
  for (auto* slot : block.param_slots())
    for (auto& v : (*slot)->values) v = rng.next_gaussian(sigma);
}

double check_at_points(const std::vector<std::size_t>& shape, const PointFn& fn, double h,
                       std::size_t points, std::uint64_t seed_base, double sigma = 1.0) {
  double worst = 0.0;
  for (std::size_t s = 0; s < points; ++s) {
    SplitRng rng(seed_base + s);
    auto point = Tensor::randn(shape, rng, sigma);
    worst = std::max(worst, grad_check(fn, point, h, 1e-5).max_rel_err);
  }
  return worst;
}

}  // namespace

std::vector<BatteryEntry> run_grad_battery(double tol, double h) {
  std::vector<BatteryEntry> out;
  auto push = [&](const std::string& name, double err) {
    out.push_back({name, err, err <= tol});
  };
  auto run = [&](const std::string& name, const std::vector<std::size_t>& shape,
                 const PointFn& fn, std::uint64_t seed) {
    push(name, check_at_points(shape, fn, h, 5, seed));
  };

  // Fixed partner tensors so each probe differentiates one argument.
  SplitRng fixed(9000);
  auto b34 = Tensor::randn({3, 4}, fixed, 1.0);
  auto a23 = Tensor::randn({2, 3}, fixed, 1.0);
  auto vec6 = Tensor::randn({6}, fixed, 1.0);
  auto gamma = Tensor::randn({5}, fixed, 0.5);
  auto beta = Tensor::randn({5}, fixed, 0.5);
  auto x_ln = Tensor::randn({3, 5}, fixed, 1.0);

  run("matmul_lhs", {2, 3},
      [&](const TensorPtr& x) { return weighted_sum(matmul(x, b34), 1); }, 100);
  run("matmul_rhs", {3, 4},
      [&](const TensorPtr& x) { return weighted_sum(matmul(a23, x), 2); }, 110);
  run("softmax_rows", {3, 5},
      [&](const TensorPtr& x) { return weighted_sum(softmax_rows(x), 3); }, 120);
  run("layer_norm_x", {3, 5},
      [&](const TensorPtr& x) { return weighted_sum(layer_norm(x, gamma, beta, 1e-5), 4); },
      130);
  run("layer_norm_gamma", {5},
      [&](const TensorPtr& g) { return weighted_sum(layer_norm(x_ln, g, beta, 1e-5), 5); },
      140);
  run("layer_norm_beta", {5},
      [&](const TensorPtr& b) { return weighted_sum(layer_norm(x_ln, gamma, b, 1e-5), 6); },
      150);
  run("cosine_sim_u", {6}, [&](const TensorPtr& u) { return cosine_sim(u, vec6); }, 160);
  run("cosine_sim_v", {6}, [&](const TensorPtr& v) { return cosine_sim(vec6, v); }, 170);
  run("cross_entropy_logits", {7},
      [&](const TensorPtr& z) { return cross_entropy_logits(z, 2); }, 180);
  run("gelu", {8}, [&](const TensorPtr& x) { return weighted_sum(gelu(x), 7); }, 190);
  run("sigmoid", {8}, [&](const TensorPtr& x) { return weighted_sum(sigmoid(x), 8); }, 200);
  run("l2_normalize", {6},
      [&](const TensorPtr& x) { return weighted_sum(l2_normalize(x), 9); }, 210);
  run("mean_rows", {4, 5},
      [&](const TensorPtr& x) { return weighted_sum(mean_rows(x), 10); }, 220);
  run("sim_max_tokens", {4, 6},
      [&](const TensorPtr& v) { return sim_max_tokens(v, vec6); }, 230);
  run("sim_mean_pooled", {4, 6},
      [&](const TensorPtr& v) { return sim_mean_pooled(v, vec6); }, 240);

  // Attention blocks at reduced dims: 4 frames x 3 patches, D=10, d=6, l=3.
  PatcherDims dims;
  dims.latents = 3;
  dims.token_dim = 10;
  dims.model_dim = 6;
  dims.token_count = 12;
  dims.frames = 4;
  SplitRng prng(4242);
  PerceiverPatcher perceiver = PerceiverPatcher::init(dims, prng.split("p"));
  randomize_params(perceiver, 0.2, 8101);
  TransformerPatcher transformer = TransformerPatcher::init(dims, prng.split("t"));
  randomize_params(transformer, 0.2, 8102);
  auto tokens = Tensor::randn({12, 10}, fixed, 1.0);

  {
    double worst = 0.0;
    const std::size_t n_params = perceiver.trainable().size();
    for (std::size_t pi = 0; pi < n_params; ++pi) {
      const auto shape = perceiver.trainable()[pi]->shape;
      PointFn fn = [&, pi](const TensorPtr& x) {
        PerceiverPatcher p2 = perceiver;
        *p2.param_slots()[pi] = x;
        return weighted_sum(p2.forward(tokens), 11);
      };
      worst = std::max(worst, check_at_points(shape, fn, 3e-5, 1, 300 + pi, 0.2));
    }
    push("perceiver_forward", worst);
  }
  {
    double worst = 0.0;
    const std::size_t n_params = transformer.trainable().size();
    for (std::size_t pi = 0; pi < n_params; ++pi) {
      const auto shape = transformer.trainable()[pi]->shape;
      PointFn fn = [&, pi](const TensorPtr& x) {
        TransformerPatcher t2 = transformer;
        *t2.param_slots()[pi] = x;
        return weighted_sum(t2.forward(tokens), 12);
      };
      worst = std::max(worst, check_at_points(shape, fn, 3e-4, 1, 400 + pi, 0.2));
    }
    push("transformer_forward", worst);
  }

  // Losses, differentiated through the patched-token matrices of a small
  // batch (the first instance's tokens are the probe point).
  const double tau = 0.05;
  auto head = [](const TensorPtr& v, const TensorPtr& t) { return sim_max_tokens(v, t); };
  auto make_batch = [&](const TensorPtr& probe_tokens) {
    SplitRng brng(777);
    std::vector<BatchInstance> batch(3);
    for (std::size_t i = 0; i < 3; ++i) {
      auto& inst = batch[i];
      inst.patched_tokens =
          i == 0 ? probe_tokens : Tensor::randn({3, 6}, brng, 1.0);
      std::vector<double> t(6), at(6), rv(18);
      SplitRng trng = brng.split(i);
      for (auto& x : t) x = trng.next_gaussian();
      for (auto& x : at) x = trng.next_gaussian();
      for (auto& x : rv) x = trng.next_gaussian();
      inst.text = Tensor::make({6}, t);
      inst.antonym_text = i != 1 ? Tensor::make({6}, at) : nullptr;
      inst.gated = i != 2;
      inst.reversed_patched_tokens = inst.gated ? Tensor::make({3, 6}, rv) : nullptr;
    }
    return batch;
  };
  run("vtc_loss", {3, 6},
      [&](const TensorPtr& x) {
        auto batch = make_batch(x);
        std::vector<std::vector<TensorPtr>> sims(3, std::vector<TensorPtr>(3));
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j)
            sims[i][j] = head(batch[i].patched_tokens, batch[j].text);
        return vtc_loss(sims, tau);
      },
      500);
  run("vac_loss", {3, 6},
      [&](const TensorPtr& x) { return vac_loss(make_batch(x), head, tau).loss; }, 510);
  run("atm_loss", {3, 6},
      [&](const TensorPtr& x) { return atm_loss(make_batch(x), head, tau).loss; }, 520);

  // Fuser at reduced dims, per parameter, plus probes through both inputs.
  {
    Fuser fuser = Fuser::init(6, prng.split("f"));
    randomize_params(fuser, 0.2, 8103);
    auto query = Tensor::randn({6}, fixed, 1.0);
    auto ptokens = Tensor::randn({3, 6}, fixed, 1.0);
    double worst = 0.0;
    const std::size_t n_params = fuser.trainable().size();
    for (std::size_t pi = 0; pi < n_params; ++pi) {
      const auto shape = fuser.trainable()[pi]->shape;
      PointFn fn = [&, pi](const TensorPtr& x) {
        Fuser f2 = fuser;
        *f2.param_slots()[pi] = x;
        return weighted_sum(f2.forward(query, ptokens).fused, 13);
      };
      worst = std::max(worst, check_at_points(shape, fn, 3e-5, 1, 600 + pi, 0.2));
    }
    PointFn through_tokens = [&](const TensorPtr& x) {
      return weighted_sum(fuser.forward(query, x).fused, 14);
    };
    worst = std::max(worst, check_at_points({3, 6}, through_tokens, h, 2, 650));
    push("fuser_forward", worst);
  }

  // Side-tune blend through the logit and both features.
  {
    auto vstar = Tensor::randn({6}, fixed, 1.0);
    auto vpatched = Tensor::randn({6}, fixed, 1.0);
    run("side_tune_blend_a", {1},
        [&](const TensorPtr& a) {
          SideTuner st;
          st.a = a;
          return weighted_sum(st.blend(vstar, vpatched), 15);
        },
        700);
    run("side_tune_blend_features", {6},
        [&](const TensorPtr& v) {
          SideTuner st = SideTuner::init();
          return weighted_sum(st.blend(v, vpatched), 16);
        },
        710);
  }

  return out;
}

std::string battery_tsv(const std::vector<BatteryEntry>& entries) {
  std::ostringstream os;
  os << "op\tmax_rel_err\tpass\n";
  os.precision(12);
  for (const auto& e : entries)
    os << e.op << '\t' << e.max_rel_err << '\t' << (e.pass ? 1 : 0) << '\n';
  return os.str();
}

bool battery_passed(const std::vector<BatteryEntry>& entries) {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

}  // namespace paxl
