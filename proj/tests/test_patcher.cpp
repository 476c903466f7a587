#include "paxl/patcher.hpp"

#include <cmath>

#include "doctest.h"
#include "paxl/errors.hpp"
#include "paxl/gradcheck.hpp"

using namespace paxl;

namespace {

PatcherDims desk_dims() {
  PatcherDims d;
  d.latents = 8;
  d.token_dim = 48;
  d.model_dim = 32;
  d.token_count = 72;
  d.frames = 8;
  d.heads = 2;
  return d;
}

TensorPtr weighted_sum(const TensorPtr& t, std::uint64_t seed) {
  SplitRng rng(seed);
  std::vector<double> w(t->size());
  for (auto& x : w) x = rng.next_gaussian();
  return sum(mul(t, Tensor::make(t->shape, std::move(w))));
}

}  // namespace

TEST_CASE("perceiver output is l x d for any token count") {
  for (std::size_t frames : {4u, 8u}) {
    PatcherDims dims = desk_dims();
    dims.frames = frames;
    dims.token_count = frames * 9;
    auto p = PerceiverPatcher::init(dims, SplitRng(3));
    SplitRng rng(5);
    auto tokens = Tensor::randn({dims.token_count, dims.token_dim}, rng, 1.0);
    auto out = p.forward(tokens);
    CHECK(out->shape == std::vector<std::size_t>{8, 32});
  }

  SUBCASE("bottleneck constraint enforced") {
    PatcherDims bad = desk_dims();
    bad.latents = 100;  // l >= P
    CHECK_THROWS_AS(PerceiverPatcher::init(bad, SplitRng(1)), ConfigError);
  }
}

TEST_CASE("severed value path makes the perceiver ignore its input") {
  auto p = PerceiverPatcher::init(desk_dims(), SplitRng(3));
  p.w_v->values.assign(p.w_v->size(), 0.0);
  p.w_o->values.assign(p.w_o->size(), 0.0);
  SplitRng rng(5);
  auto t1 = Tensor::randn({72, 48}, rng, 1.0);
  auto t2 = Tensor::randn({72, 48}, rng, 1.0);
  CHECK(p.forward(t1)->values == p.forward(t2)->values);
}

TEST_CASE("permuting frame blocks changes the perceiver output") {
  auto p = PerceiverPatcher::init(desk_dims(), SplitRng(3));
  SplitRng rng(5);
  auto tokens = Tensor::randn({72, 48}, rng, 1.0);
  // frame-block reversal (9 patches of width 48 per frame)
  std::vector<double> rev(tokens->size());
  const std::size_t block = 9 * 48;
  for (std::size_t f = 0; f < 8; ++f)
    std::copy(tokens->values.begin() + (7 - f) * block, tokens->values.begin() + (8 - f) * block,
              rev.begin() + f * block);
  auto out1 = p.forward(tokens);
  auto out2 = p.forward(Tensor::make({72, 48}, rev));
  double max_delta = 0;
  for (std::size_t i = 0; i < out1->size(); ++i)
    max_delta = std::max(max_delta, std::abs(out1->values[i] - out2->values[i]));
  CHECK(max_delta > 0.0);
}

TEST_CASE("transformer output keeps all tokens at model width") {
  auto t = TransformerPatcher::init(desk_dims(), SplitRng(3));
  SplitRng rng(5);
  auto tokens = Tensor::randn({72, 48}, rng, 1.0);
  CHECK(t.forward(tokens)->shape == std::vector<std::size_t>{72, 32});

  SUBCASE("zeroed attention reduces to a per-token feed-forward") {
    auto full = t.forward(tokens, /*diag_zero_attention=*/true);
    // Build a second input sharing only token 0; outputs at row 0 must agree.
    auto other = Tensor::randn({72, 48}, rng, 1.0);
    for (std::size_t j = 0; j < 48; ++j) other->values[j] = tokens->values[j];
    auto out2 = t.forward(other, true);
    for (std::size_t j = 0; j < 32; ++j)
      CHECK(full->values[j] == doctest::Approx(out2->values[j]).epsilon(1e-12));
  }
}

TEST_CASE("parameter counts: perceiver under transformer at matched width") {
  auto p = PerceiverPatcher::init(desk_dims(), SplitRng(3));
  auto t = TransformerPatcher::init(desk_dims(), SplitRng(3));
  const double ratio = static_cast<double>(p.trainable_count()) /
                       static_cast<double>(t.trainable_count());
  CHECK(p.trainable_count() < t.trainable_count());
  CHECK(ratio >= 1.0 / 3.0);
  CHECK(ratio <= 2.0 / 3.0);
}

TEST_CASE("initialization is seed-deterministic") {
  auto a = PerceiverPatcher::init(desk_dims(), SplitRng(77));
  auto b = PerceiverPatcher::init(desk_dims(), SplitRng(77));
  CHECK(a.w_k->values == b.w_k->values);
  CHECK(a.latents->values == b.latents->values);
  auto c = PerceiverPatcher::init(desk_dims(), SplitRng(78));
  CHECK(a.w_k->values != c.w_k->values);
}

TEST_CASE("similarity heads") {
  auto t_star = Tensor::make({2}, {1.0, 0.0});

  SUBCASE("max head picks the best row; ties go to the lowest index") {
    auto tokens = Tensor::make({3, 2}, {0.6, 0.8, 1.0, 0.0, 0.8, 0.6}, true);
    auto s = sim_max_tokens(tokens, t_star);
    CHECK(s->item() == doctest::Approx(1.0));

    auto tied = Tensor::make({2, 2}, {3.0, 0.0, 5.0, 0.0}, true);
    auto st = sim_max_tokens(tied, t_star);  // both rows cosine 1
    backward(st);
    CHECK(tied->grad[2] == 0.0);  // gradient went to row 0 only
    CHECK(tied->grad[3] == 0.0);
  }

  SUBCASE("single row degenerates to plain cosine") {
    auto one = Tensor::make({1, 2}, {2.0, 2.0});
    CHECK(sim_max_tokens(one, t_star)->item() == doctest::Approx(std::sqrt(0.5)));
    CHECK(sim_mean_pooled(one, t_star)->item() == doctest::Approx(std::sqrt(0.5)));
  }

  SUBCASE("mean head: hand value and cancellation error") {
    auto rows = Tensor::make({2, 2}, {1.0, 0.0, 0.0, 1.0});
    CHECK(sim_mean_pooled(rows, t_star)->item() == doctest::Approx(0.707107).epsilon(1e-6));

    auto cancel = Tensor::make({2, 2}, {1.0, 1.0, -1.0, -1.0});
    CHECK_THROWS_AS(sim_mean_pooled(cancel, t_star), DegenerateVectorError);
  }
}

TEST_CASE("perceiver gradients pass central differences at desk dims") {
  // Full per-parameter sweep at desk dims (one seeded point per parameter);
  // the verification battery repeats this at reduced dims over 5 points.
  auto dims = desk_dims();
  PerceiverPatcher p = PerceiverPatcher::init(dims, SplitRng(3));
  // Probe at a random O(0.2) operating point: near the 0.02-scale init most
  // entries sit below the denominator floor of the relative-error metric.
  {
    SplitRng prng(8201);
    for (auto* slot : p.param_slots())
      for (auto& v : (*slot)->values) v = prng.next_gaussian(0.2);
  }
  SplitRng rng(5);
  auto tokens = Tensor::randn({dims.token_count, dims.token_dim}, rng, 1.0);
  double worst = 0;
  const std::size_t n_params = p.trainable().size();
  for (std::size_t pi = 0; pi < n_params; ++pi) {
    auto report = grad_check(
        [&](const TensorPtr& x) {
          PerceiverPatcher probe = p;
          *probe.param_slots()[pi] = x;
          return weighted_sum(probe.forward(tokens), 1000 + pi);
        },
        p.trainable()[pi], 1e-4, 1e-5);
    worst = std::max(worst, report.max_rel_err);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("checkpoint round trip restores both variants") {
  auto dims = desk_dims();
  auto p = PerceiverPatcher::init(dims, SplitRng(3));
  auto named = p.named();
  auto q = PerceiverPatcher::init(dims, SplitRng(99));
  CHECK(q.w_k->values != p.w_k->values);
  q.load(named);
  CHECK(q.w_k->values == p.w_k->values);
  CHECK(q.latents->values == p.latents->values);

  auto t = TransformerPatcher::init(dims, SplitRng(3));
  auto t2 = TransformerPatcher::init(dims, SplitRng(99));
  t2.load(t.named());
  CHECK(t2.out_proj->values == t.out_proj->values);

  SUBCASE("missing and mis-shaped tensors are rejected") {
    auto partial = named;
    partial.erase("patcher.w_k");
    CHECK_THROWS_AS(q.load(partial), CheckpointError);
    auto wrong = named;
    wrong["patcher.w_k"] = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(q.load(wrong), CheckpointError);
  }
}
