#include "paxl/fuser.hpp"

#include <cmath>

#include "doctest.h"
#include "paxl/errors.hpp"
#include "paxl/gradcheck.hpp"
#include "paxl/patcher.hpp"

using namespace paxl;

namespace {

TensorPtr weighted_sum(const TensorPtr& t, std::uint64_t seed) {
  SplitRng rng(seed);
  std::vector<double> w(t->size());
  for (auto& x : w) x = rng.next_gaussian();
  return sum(mul(t, Tensor::make(t->shape, std::move(w))));
}

}  // namespace

TEST_CASE("fuser output is a normalized d-vector for any token count") {
  auto fuser = Fuser::init(32, SplitRng(3));
  SplitRng rng(5);
  auto query = Tensor::randn({32}, rng, 1.0);
  for (std::size_t l : {1u, 8u, 20u}) {
    auto tokens = Tensor::randn({l, 32}, rng, 1.0);
    auto out = fuser.forward(query, tokens);
    CHECK(out.fused->shape == std::vector<std::size_t>{32});
    double n = 0;
    for (double v : out.fused->values) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));

    // Attention over the patched tokens is a probability row.
    CHECK(out.attention->shape == std::vector<std::size_t>{1, l});
    double total = 0;
    for (double v : out.attention->values) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(fuser.forward(Tensor::zeros({16}), Tensor::zeros({4, 32})), ShapeError);
}

TEST_CASE("severed value path reduces the fuser to a query-only transform") {
  auto fuser = Fuser::init(32, SplitRng(3));
  fuser.w_v->values.assign(fuser.w_v->size(), 0.0);
  fuser.w_o->values.assign(fuser.w_o->size(), 0.0);
  SplitRng rng(5);
  auto query = Tensor::randn({32}, rng, 1.0);
  auto t1 = Tensor::randn({8, 32}, rng, 1.0);
  auto t2 = Tensor::randn({8, 32}, rng, 1.0);
  CHECK(fuser.forward(query, t1).fused->values == fuser.forward(query, t2).fused->values);
}

TEST_CASE("fuser gradients pass central differences") {
  auto fuser = Fuser::init(32, SplitRng(3));
  {
    SplitRng prng(8202);
    for (auto* slot : fuser.param_slots())
      for (auto& v : (*slot)->values) v = prng.next_gaussian(0.2);
  }
  SplitRng rng(5);
  auto query = Tensor::randn({32}, rng, 1.0);
  auto tokens = Tensor::randn({8, 32}, rng, 1.0);
  double worst = 0;
  const std::size_t n_params = fuser.trainable().size();
  for (std::size_t pi = 0; pi < n_params; ++pi) {
    auto report = grad_check(
        [&](const TensorPtr& x) {
          Fuser probe = fuser;
          *probe.param_slots()[pi] = x;
          return weighted_sum(probe.forward(query, tokens).fused, 2000 + pi);
        },
        fuser.trainable()[pi], 1e-4, 1e-5);
    worst = std::max(worst, report.max_rel_err);
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("side-tune blend matches the sigmoid convex combination") {
  auto vstar = Tensor::make({3}, {1.0, 0.0, 2.0});
  auto v = Tensor::make({3}, {0.0, 1.0, -2.0});

  SUBCASE("logit zero blends evenly") {
    SideTuner st = SideTuner::init();
    auto out = st.blend(vstar, v);
    CHECK(out->values[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out->values[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out->values[2] == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("large logit saturates toward the backbone feature") {
    SideTuner st;
    st.a = Tensor::scalar(10.0, true);
    CHECK(st.alpha() == doctest::Approx(0.9999546).epsilon(1e-6));
    CHECK(st.alpha() > 0.999);
    auto out = st.blend(vstar, v);
    CHECK(out->values[0] == doctest::Approx(1.0).epsilon(1e-3));
  }

  SUBCASE("equal features are a fixed point for every logit") {
    for (double a : {-3.0, 0.0, 5.0}) {
      SideTuner st;
      st.a = Tensor::scalar(a, true);
      auto out = st.blend(vstar, vstar);
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(out->values[i] == doctest::Approx(vstar->values[i]).epsilon(1e-12));
    }
  }

  SUBCASE("exactly one trainable scalar; gradient passes the checker") {
    SideTuner st = SideTuner::init();
    CHECK(st.trainable().size() == 1);
    CHECK(st.trainable()[0]->size() == 1);
    auto report = grad_check(
        [&](const TensorPtr& a) {
          SideTuner probe;
          probe.a = a;
          return weighted_sum(probe.blend(vstar, v), 42);
        },
        st.a, 1e-6, 1e-5);
    CHECK(report.max_rel_err <= 1e-5);
  }
}

TEST_CASE("ensemble prediction") {
  CHECK(ensemble_predict({0.6, 0.4}, {0.3, 0.7}) == 1);
  CHECK(ensemble_predict({0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}) == 1);  // agreement
  CHECK(ensemble_predict({0.5, 0.5}, {0.1, 0.9}) == 1);            // uniform path defers

  SUBCASE("commutativity and tie-to-lowest") {
    const std::vector<double> a{0.1, 0.4, 0.5}, b{0.6, 0.3, 0.1};
    CHECK(ensemble_predict(a, b) == ensemble_predict(b, a));
    CHECK(ensemble_predict({0.5, 0.5}, {0.5, 0.5}) == 0);
  }

  SUBCASE("argmax unchanged by adding a constant vector to the sum") {
    const std::vector<double> x{0.7, 0.2, 0.1};
    std::size_t base = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
      if (x[i] > x[base]) base = i;
    std::vector<double> shifted(x);
    for (auto& v : shifted) v += 3.25;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < shifted.size(); ++i)
      if (shifted[i] > shifted[arg]) arg = i;
    CHECK(arg == base);
  }

  SUBCASE("malformed inputs rejected") {
    CHECK_THROWS_AS(ensemble_predict({0.5, 0.5}, {1.0}), ShapeError);
    CHECK_THROWS_AS(ensemble_predict({0.6, 0.6}, {0.5, 0.5}), NumericError);
  }
}

TEST_CASE("trainable budget: patcher+fuser roughly doubles the patcher") {
  PatcherDims dims;
  dims.latents = 8;
  dims.token_dim = 48;
  dims.model_dim = 32;
  dims.token_count = 72;
  dims.frames = 8;
  dims.heads = 2;
  auto patcher = PerceiverPatcher::init(dims, SplitRng(1));
  auto fuser = Fuser::init(32, SplitRng(2));
  const double ratio =
      static_cast<double>(patcher.trainable_count() + fuser.trainable_count()) /
      static_cast<double>(patcher.trainable_count());
  CHECK(ratio >= 1.8);
  CHECK(ratio <= 2.2);
}

TEST_CASE("fuser and side-tuner checkpoint round trips") {
  auto f = Fuser::init(16, SplitRng(10));
  auto g = Fuser::init(16, SplitRng(20));
  CHECK(f.w_q->values != g.w_q->values);
  g.load(f.named());
  CHECK(f.w_q->values == g.w_q->values);

  SideTuner s = SideTuner::init();
  s.a->values[0] = -1.25;
  SideTuner t = SideTuner::init();
  t.load(s.named());
  CHECK(t.a->values[0] == -1.25);
}
