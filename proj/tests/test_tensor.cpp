#include "paxl/tensor.hpp"

#include <cmath>

#include "doctest.h"
#include "paxl/gradcheck.hpp"
#include "paxl/optim.hpp"
#include "paxl/rng.hpp"

using namespace paxl;

namespace {

TensorPtr mat(std::size_t r, std::size_t c, std::vector<double> v, bool rg = false) {
  return Tensor::make({r, c}, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul matches hand-computed products") {
  auto identity = mat(2, 2, {1, 0, 0, 1});
  auto a = mat(2, 2, {1, 2, 3, 4});
  auto prod = matmul(identity, a);
  CHECK(prod->values == std::vector<double>{1, 2, 3, 4});

  auto zero = mat(2, 2, {0, 0, 0, 0});
  CHECK(matmul(a, zero)->values == std::vector<double>{0, 0, 0, 0});

  auto b = mat(2, 2, {5, 6, 7, 8});
  CHECK(matmul(a, b)->values == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  auto a = mat(2, 3, {1, 2, 3, 4, 5, 6});
  auto b = mat(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("softmax rows: symmetry, shift invariance, reference values") {
  auto two = Tensor::make({2}, {0.0, 0.0});
  auto s = softmax_rows(two);
  CHECK(s->values[0] == doctest::Approx(0.5).epsilon(1e-12));

  auto c = Tensor::make({3}, {4.2, 4.2, 4.2});
  auto sc = softmax_rows(c);
  for (double v : sc->values) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto x = Tensor::make({3}, {1.0, 2.0, 3.0});
  auto y = softmax_rows(x);
  CHECK(y->values[0] == doctest::Approx(0.090031).epsilon(1e-5));
  CHECK(y->values[1] == doctest::Approx(0.244728).epsilon(1e-5));
  CHECK(y->values[2] == doctest::Approx(0.665241).epsilon(1e-5));

  SUBCASE("rows sum to one and shifting is a no-op") {
    SplitRng rng(5);
    auto m = Tensor::randn({4, 7}, rng, 3.0);
    auto sm = softmax_rows(m);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 7; ++j) total += sm->values[r * 7 + j];
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    auto shifted = softmax_rows(add_const(m, 17.5));
    for (std::size_t i = 0; i < sm->size(); ++i)
      CHECK(std::abs(sm->values[i] - shifted->values[i]) < 1e-12);
  }

  SUBCASE("non-finite input raises") {
    auto bad = Tensor::make({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(softmax_rows(bad), NumericError);
  }
}

TEST_CASE("layer_norm reference cases") {
  auto gamma1 = Tensor::make({2}, {1, 1});
  auto beta0 = Tensor::make({2}, {0, 0});
  auto x = Tensor::make({2}, {1.0, 3.0});
  auto y = layer_norm(x, gamma1, beta0, 0.0);
  CHECK(y->values[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y->values[1] == doctest::Approx(1.0).epsilon(1e-12));

  auto constant = Tensor::make({3}, {2.5, 2.5, 2.5});
  auto gm = Tensor::make({3}, {1, 1, 1});
  auto bt = Tensor::make({3}, {4.0, -1.0, 0.5});
  auto yc = layer_norm(constant, gm, bt, 1e-5);
  CHECK(yc->values == bt->values);

  auto zeros = Tensor::make({2}, {0.0, 0.0});
  auto gamma_any = Tensor::make({2}, {3.0, -2.0});
  auto beta57 = Tensor::make({2}, {5.0, 7.0});
  CHECK(layer_norm(zeros, gamma_any, beta57, 1e-5)->values == std::vector<double>{5.0, 7.0});
}

TEST_CASE("cosine similarity values and degenerate input") {
  auto e1 = Tensor::make({2}, {1, 0});
  auto e2 = Tensor::make({2}, {0, 1});
  CHECK(cosine_sim(e1, e2)->item() == doctest::Approx(0.0).epsilon(1e-12));

  auto u = Tensor::make({2}, {2, 2});
  auto v = Tensor::make({2}, {1, 1});
  CHECK(cosine_sim(u, v)->item() == doctest::Approx(1.0).epsilon(1e-12));

  auto a = Tensor::make({3}, {1, 2, 3});
  auto b = Tensor::make({3}, {4, 5, 6});
  CHECK(cosine_sim(a, b)->item() == doctest::Approx(0.974632).epsilon(1e-6));

  auto z = Tensor::make({3}, {0, 0, 0});
  CHECK_THROWS_AS(cosine_sim(z, z), DegenerateVectorError);

  SUBCASE("scale invariance") {
    SplitRng rng(11);
    auto p = Tensor::randn({6}, rng, 1.0);
    auto q = Tensor::randn({6}, rng, 1.0);
    const double base = cosine_sim(p, q)->item();
    const double scaled = cosine_sim(scale(p, 3.7), scale(q, 0.002))->item();
    CHECK(std::abs(base - scaled) < 1e-12);
  }
}

TEST_CASE("cross entropy logits closed forms") {
  auto uniform = Tensor::make({2}, {0.3, 0.3});
  CHECK(cross_entropy_logits(uniform, 0)->item() == doctest::Approx(std::log(2)).epsilon(1e-9));

  auto confident = Tensor::make({2}, {10.0, 0.0});
  CHECK(cross_entropy_logits(confident, 0)->item() ==
        doctest::Approx(4.53989e-5).epsilon(1e-4));
  CHECK(std::abs(cross_entropy_logits(confident, 0)->item() - std::log1p(std::exp(-10.0))) <
        1e-15);

  auto wrong = Tensor::make({2}, {0.0, 10.0});
  CHECK(cross_entropy_logits(wrong, 0)->item() == doctest::Approx(10.0000454).epsilon(1e-6));

  CHECK_THROWS_AS(cross_entropy_logits(uniform, 2), IndexError);
}

TEST_CASE("backward of a polynomial and a detached parameter") {
  auto x = Tensor::scalar(3.0, true);
  auto loss = mul(x, x);
  backward(loss);
  CHECK(x->grad[0] == doctest::Approx(6.0).epsilon(1e-12));

  SUBCASE("double backward without a fresh forward is an error") {
    CHECK_THROWS_AS(backward(loss), GraphError);
  }

  SUBCASE("unreachable parameter keeps a zero gradient") {
    auto p = Tensor::scalar(2.0, true);
    auto q = Tensor::scalar(5.0, true);
    auto detached_loss = mul(q, q);
    backward(detached_loss);
    REQUIRE(p->grad.size() == 1);
    CHECK(p->grad[0] == 0.0);
  }

  SUBCASE("non-scalar loss rejected") {
    auto m = mat(2, 2, {1, 2, 3, 4}, true);
    CHECK_THROWS_AS(backward(m), GraphError);
  }
}

TEST_CASE("matmul gradients match central differences") {
  SplitRng rng(21);
  auto a = Tensor::randn({3, 4}, rng, 1.0);
  auto report = grad_check(
      [&](const TensorPtr& x) { return sum(matmul(x, a)); },
      Tensor::randn({2, 3}, rng, 1.0), 1e-6, 1e-5);
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("backward is bit-deterministic across forward rebuilds") {
  SplitRng rng(31);
  auto w_init = Tensor::randn({4, 4}, rng, 1.0);
  auto x0 = Tensor::randn({4, 4}, rng, 1.0);
  auto run = [&]() {
    auto w = Tensor::make(w_init->shape, w_init->values, true);
    auto y = sum(gelu(matmul(x0, w)));
    backward(y);
    return w->grad;
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check on reference functions") {
  SUBCASE("linear function has exact all-ones gradient") {
    SplitRng rng(41);
    auto report = grad_check([](const TensorPtr& x) { return sum(x); },
                             Tensor::randn({5}, rng, 2.0), 1e-4, 1e-10);
    for (const auto& e : report.entries) CHECK(e.analytic == doctest::Approx(1.0));
    CHECK(report.max_rel_err < 1e-10);
  }

  SUBCASE("cosine composed with layer_norm at seed 7") {
    SplitRng rng(7);
    auto point = Tensor::randn({8}, rng, 1.0);
    auto partner = Tensor::randn({8}, rng, 1.0);
    auto gamma = Tensor::make({8}, std::vector<double>(8, 1.0));
    auto beta = Tensor::zeros({8});
    auto report = grad_check(
        [&](const TensorPtr& x) {
          return cosine_sim(layer_norm(x, gamma, beta, 1e-5), partner);
        },
        point, 1e-6, 1e-5);
    CHECK(report.max_rel_err <= 1e-5);
  }

  SUBCASE("cube at x=2: analytic 12 within 1e-7 of numeric") {
    auto report = grad_check(
        [](const TensorPtr& x) { return mul(mul(x, x), x); }, Tensor::scalar(2.0), 1e-6, 1e-7);
    CHECK(report.entries[0].analytic == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(report.max_rel_err <= 1e-7);
  }

  SUBCASE("step size outside (0, 1e-3] rejected") {
    CHECK_THROWS_AS(
        grad_check([](const TensorPtr& x) { return sum(x); }, Tensor::scalar(1.0), 0.1, 1e-5),
        NumericError);
  }
}

TEST_CASE("adamw reference steps") {
  SUBCASE("zero gradient and zero decay leave parameters untouched") {
    auto p = Tensor::make({3}, {1.0, -2.0, 0.5}, true);
    AdamW opt({p}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    p->zero_grad();
    const auto before = p->values;
    opt.step();
    CHECK(p->values == before);
  }

  SUBCASE("first step with unit gradient is a full lr step") {
    auto p = Tensor::scalar(1.0, true);
    AdamW opt({p}, AdamWConfig{0.1, 0.9, 0.999, 0.0, 0.0});
    p->grad = {1.0};
    opt.step();
    CHECK(opt.step_count() == 1);
    CHECK(p->values[0] == doctest::Approx(0.9).epsilon(1e-12));
  }

  SUBCASE("pure decoupled decay") {
    auto p = Tensor::scalar(1.0, true);
    AdamW opt({p}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.05});
    p->grad = {0.0};
    opt.step();
    CHECK(p->values[0] == doctest::Approx(0.995).epsilon(1e-12));
  }

  SUBCASE("presets carry the documented hyperparameters") {
    const auto desk = adamw_preset("desk");
    CHECK(desk.lr == doctest::Approx(1e-3));
    CHECK(desk.weight_decay == doctest::Approx(0.01));
    const auto paper = adamw_preset("paper");
    CHECK(paper.lr == doctest::Approx(1e-5));
    CHECK(paper.weight_decay == doctest::Approx(0.05));
    CHECK_THROWS_AS(adamw_preset("warp"), ConfigError);
  }
}

TEST_CASE("rng streams are deterministic and independent") {
  SplitRng a(99), b(99);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

  auto s1 = SplitRng(99).split("alpha");
  auto s2 = SplitRng(99).split("beta");
  CHECK(s1.next_u64() != s2.next_u64());

  SUBCASE("split does not disturb the parent stream") {
    SplitRng p1(7), p2(7);
    (void)p1.split("child");
    CHECK(p1.next_u64() == p2.next_u64());
  }

  SUBCASE("gaussian moments are sane") {
    SplitRng g(123);
    double mean = 0, var = 0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = g.next_gaussian();
    for (double x : xs) mean += x;
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
  }
}
