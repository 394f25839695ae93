#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rada/autodiff.hpp"
#include "rada/optim.hpp"
#include "support.hpp"

using namespace rada;
using rada::testing::gradient_check;

TEST_CASE("tensor shape rules") {
  CHECK(shape_numel({2, 3}) == 6);
  CHECK_THROWS_AS(shape_numel({}), std::invalid_argument);
  CHECK_THROWS_AS(shape_numel({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);

  const Tensor v = Tensor::vector({1, 2, 3});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 3);
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(m.at(1, 0) == 3);
  CHECK(m.row(1)[1] == 4);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS(m.item());
}

TEST_CASE("primitive forward values") {
  ad::Graph g;
  auto x = g.constant(Tensor::vector({-1.0, 2.0}));
  CHECK(g.value(g.relu(x)).raw() == std::vector<double>{0.0, 2.0});
  CHECK(g.value(g.sigmoid(g.constant(Tensor::scalar(0.0)))).item() == 0.5);

  const auto& ls = g.value(g.log_softmax(g.constant(Tensor::matrix(1, 2, {0.0, 0.0}))));
  CHECK(ls[0] == doctest::Approx(-0.69314718).epsilon(1e-9));
  CHECK(ls[1] == doctest::Approx(-0.69314718).epsilon(1e-9));

  // sigmoid stays finite and in [0, 1] at extreme logits
  const auto& s = g.value(g.sigmoid(g.constant(Tensor::vector({-800.0, 800.0}))));
  CHECK(s.all_finite());
  CHECK(s[0] >= 0.0);
  CHECK(s[1] <= 1.0);
}

TEST_CASE("log_softmax rows exponentiate to one") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Graph g(false);
    const auto x = rada::testing::random_tensor(rng, {4, 5}, -30.0, 30.0);
    const auto& lp = g.value(g.log_softmax(g.constant(x)));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (double v : lp.row(i)) s += std::exp(v);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("gradient reversal") {
  SUBCASE("identity forward") {
    ad::Graph g;
    auto x = g.parameter(Tensor::vector({1.0, 2.0}));
    CHECK(g.value(g.gradient_reversal(x, 1.0)).raw() == std::vector<double>{1.0, 2.0});
  }
  SUBCASE("backward scales upstream by -lambda") {
    for (double lambda : {1.0, 0.0}) {
      ad::Graph g;
      auto x = g.parameter(Tensor::vector({1.0, 2.0}));
      auto loss = g.weighted_sum(g.gradient_reversal(x, lambda), {0.3, -0.2});
      const auto grads = g.backward(loss);
      CHECK(grads[0][0] == -lambda * 0.3);
      CHECK(grads[0][1] == -lambda * -0.2);
    }
  }
  SUBCASE("negative lambda rejected") {
    ad::Graph g;
    auto x = g.parameter(Tensor::scalar(1.0));
    CHECK_THROWS_AS(g.gradient_reversal(x, -1.0), std::invalid_argument);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("x * x at 3") {
    ad::Graph g;
    auto x = g.parameter(Tensor::matrix(1, 1, {3.0}));
    const auto grads = g.backward(g.reduce_mean(g.outer_flatten(x, x)));
    CHECK(grads[0].item() == 6.0);
  }
  SUBCASE("disconnected parameter gets zero") {
    ad::Graph g;
    auto a = g.parameter(Tensor::vector({1.0, 2.0}));
    auto b = g.parameter(Tensor::vector({5.0, 5.0, 5.0}));
    (void)b;
    const auto grads = g.backward(g.reduce_mean(a));
    CHECK(grads[1].raw() == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(grads[0].raw() == std::vector<double>{0.5, 0.5});
  }
  SUBCASE("non-scalar loss rejected") {
    ad::Graph g;
    auto a = g.parameter(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(g.relu(a)), std::invalid_argument);
  }
  SUBCASE("repeated backward gives the same gradients") {
    ad::Graph g;
    auto a = g.parameter(Tensor::vector({1.0, -2.0}));
    auto loss = g.weighted_sum(g.sigmoid(a), {1.0, 2.0});
    CHECK(g.backward(loss) == g.backward(loss));
  }
}

TEST_CASE("shape errors name the op and shapes") {
  ad::Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({2, 3}));
  try {
    g.matmul(a, b);
    FAIL("matmul accepted mismatched shapes");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, g.constant(Tensor({3, 2}))), std::invalid_argument);
  CHECK_THROWS_AS(g.add_bias(a, g.constant(Tensor({2}))), std::invalid_argument);
  CHECK_THROWS_AS(g.pick(a, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(g.outer_flatten(a, g.constant(Tensor({3, 2}))), std::invalid_argument);
}

TEST_CASE("graph records constants and a topological order") {
  ad::Graph g;
  auto c = g.constant(Tensor::vector({1.0, 2.0}));
  auto folded = g.relu(c);
  CHECK(g.kind(folded) == ad::OpKind::Constant);
  CHECK_FALSE(g.requires_grad(folded));

  auto p = g.parameter(Tensor::vector({1.0, 2.0}));
  auto y = g.add(g.relu(p), c);
  CHECK(g.requires_grad(y));
  for (std::size_t id = 0; id < g.size(); ++id) {
    for (auto in : g.inputs(ad::Var{id})) CHECK(in < id);
  }

  ad::Graph off(false);
  auto q = off.parameter(Tensor::scalar(1.0));
  CHECK(off.kind(q) == ad::OpKind::Constant);
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng(5);
  for (auto& fx : rada::testing::primitive_fixtures(rng)) {
    CAPTURE(fx.name);
    CHECK(rada::testing::evaluate(fx.params, fx.loss) ==
          rada::testing::evaluate(fx.params, fx.loss));
  }
}

TEST_CASE("primitive gradients match central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    for (auto& fx : rada::testing::primitive_fixtures(rng)) {
      CAPTURE(fx.name);
      CHECK(gradient_check(fx.params, fx.loss) < 1e-5);
    }
  }
}

TEST_CASE("two-layer MLP gradients match central differences") {
  Rng rng(77);
  std::vector<Tensor> params{rada::testing::random_tensor(rng, {5, 3}),
                             rada::testing::random_tensor(rng, {3, 4}),
                             rada::testing::random_tensor(rng, {4}),
                             rada::testing::random_tensor(rng, {4, 2}),
                             rada::testing::random_tensor(rng, {2})};
  const std::vector<std::size_t> labels{0, 1, 1, 0, 1};
  auto loss = [&](ad::Graph& g, const std::vector<ad::Var>& p) {
    auto h = g.relu(g.add_bias(g.matmul(p[0], p[1]), p[2]));
    auto lp = g.log_softmax(g.add_bias(g.matmul(h, p[3]), p[4]));
    return g.weighted_sum(g.pick(lp, labels), std::vector<double>(5, -0.2));
  };
  CHECK(gradient_check(params, loss) < 1e-5);
}

TEST_CASE("clamped_log has zero gradient where clamped") {
  ad::Graph g;
  auto x = g.parameter(Tensor::vector({0.0, 1.0, 0.5}));
  const auto grads = g.backward(g.weighted_sum(g.clamped_log(x, 1e-12), {1.0, 1.0, 1.0}));
  CHECK(grads[0][0] == 0.0);
  CHECK(grads[0][1] == 0.0);
  CHECK(grads[0][2] == doctest::Approx(2.0));
  CHECK(g.value(g.clamped_log(x, 1e-12)).all_finite());
}

TEST_CASE("sgd with momentum") {
  std::vector<Tensor> p{Tensor::scalar(0.0)};
  std::vector<Tensor> g{Tensor::scalar(1.0)};
  auto st = OptimizerState::for_params(p, 0.1, 0.9);
  sgd_momentum_step(p, g, st);
  CHECK(st.velocities[0].item() == 1.0);
  CHECK(p[0].item() == doctest::Approx(-0.1).epsilon(1e-15));
  sgd_momentum_step(p, g, st);
  CHECK(st.velocities[0].item() == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(p[0].item() == doctest::Approx(-0.29).epsilon(1e-15));

  std::vector<Tensor> q{Tensor::vector({1.5, -2.0})};
  auto st2 = OptimizerState::for_params(q, 0.1, 0.9);
  sgd_momentum_step(q, std::vector<Tensor>{Tensor::vector({0.0, 0.0})}, st2);
  CHECK(q[0].raw() == std::vector<double>{1.5, -2.0});

  CHECK_THROWS_AS(sgd_momentum_step(q, std::vector<Tensor>{Tensor::vector({0.0})}, st2),
                  std::invalid_argument);
  CHECK_THROWS_AS(sgd_momentum_step(q, std::vector<Tensor>{}, st2), std::invalid_argument);
  CHECK_THROWS_AS(OptimizerState::for_params(q, 0.0, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(OptimizerState::for_params(q, 0.1, 1.0), std::invalid_argument);
}
