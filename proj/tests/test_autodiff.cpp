#include <gtest/gtest.h>

#include <cmath>

#include "grad_check.hpp"
#include "primitive_cases.hpp"
#include "routenet/autodiff.hpp"

using namespace routenet;
using namespace routenet::ad;
using routenet::testing::check_gradients;
using routenet::testing::random_tensor;
using routenet::testing::primitive_cases;

TEST(Autodiff, PrimitivesPassFiniteDifferences) {
  for (const auto& c : primitive_cases())
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SplitMix64 rng(seed * 7919 + 1);
      const auto r = check_gradients(c.inputs(rng), c.f);
      EXPECT_LT(r.max_rel_err, 1e-5) << c.name << " seed " << seed << " at " << r.worst;
    }
}

TEST(Autodiff, ScalarExamples) {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0));
  t.backward(mul(x, x));
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 6.0);

  Tape t2;
  Var y = t2.leaf(Tensor::scalar(0.0));
  Var sp = softplus(y);
  EXPECT_NEAR(t2.value(sp)[0], std::log(2.0), 1e-15);
  t2.backward(sp);
  EXPECT_DOUBLE_EQ(t2.grad(y)[0], 0.5);
}

TEST(Autodiff, SeluConstants) {
  Tape t;
  Var x = t.constant(Tensor::vector({0.0, 1.0, -1.0}));
  const auto& v = t.value(selu(x));
  EXPECT_EQ(v[0], 0.0);
  EXPECT_NEAR(v[1], 1.0507009873554805, 1e-15);
  EXPECT_NEAR(v[2], 1.0507009873554805 * 1.6732632423543772 * (std::exp(-1.0) - 1), 1e-15);
}

TEST(Autodiff, NonScalarLossRejectedAndUnusedLeavesZero) {
  Tape t;
  Var a = t.leaf(Tensor(2, 2, 1.0));
  Var unused = t.leaf(Tensor(3, 1.0));
  EXPECT_THROW(t.backward(a), Error);
  t.backward(sum(a));
  for (double g : t.grad(unused).values()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, ShapeMismatchNamesBothShapes) {
  Tape t;
  Var a = t.leaf(Tensor(2, 3));
  Var b = t.leaf(Tensor(3, 2));
  try {
    add(a, b);
    FAIL();
  } catch (const Error& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("[2,3]"), std::string::npos) << m;
    EXPECT_NE(m.find("[3,2]"), std::string::npos) << m;
  }
}

TEST(Autodiff, DeterministicTape) {
  auto run = [] {
    SplitMix64 rng(5);
    Tape t;
    Var a = t.leaf(random_tensor(4, 4, rng));
    Var b = t.leaf(random_tensor(4, 4, rng));
    Var l = sum(dropout(selu(matmul(a, b)), 0.5, true, 9));
    t.backward(l);
    return std::make_pair(t.value(l)[0], t.grad(a).values()[3]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Dropout, EvalIsIdentityAndTrainIsUnbiased) {
  Tape t;
  SplitMix64 rng(3);
  const Tensor x = random_tensor(10, 10, rng);
  Var v = t.constant(x);
  EXPECT_EQ(t.value(dropout(v, 0.5, false, 1)), x);
  EXPECT_EQ(t.value(dropout(v, 0.0, true, 1)), x);
  EXPECT_EQ(t.value(dropout(v, 0.5, true, 42)), t.value(dropout(v, 0.5, true, 42)));

  const Tensor one(1, 1, 1.0);
  double mean = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    Tape ts;
    mean += ts.value(dropout(ts.constant(one), 0.5, true, static_cast<std::uint64_t>(s)))[0];
  }
  mean /= n;
  // Each draw is 0 or 2: std 1, so 4 sigma of the mean is 0.04.
  EXPECT_NEAR(mean, 1.0, 0.04);
}

TEST(SpecialFunctions, LanczosLgammaAccuracy) {
  for (double x = 0.1; x < 1e4; x *= 1.137) {
    const double ref = std::lgamma(x);
    EXPECT_NEAR(lanczos_lgamma(x), ref, 1e-10 * std::max(1.0, std::abs(ref))) << x;
  }
  EXPECT_NEAR(lanczos_lgamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(lanczos_lgamma(0.5), 0.5 * std::log(M_PI), 1e-14);
}

TEST(SpecialFunctions, DigammaMatchesDerivativeOfLgamma) {
  for (double x : {0.2, 0.5, 1.0, 2.5, 7.0, 40.0}) {
    const double h = 1e-5;
    const double numeric = (std::lgamma(x + h) - std::lgamma(x - h)) / (2 * h);
    EXPECT_NEAR(digamma(x), numeric, 1e-7 * std::max(1.0, std::abs(numeric))) << x;
  }
  EXPECT_NEAR(digamma(1.0), -0.5772156649015329, 1e-13);
}

TEST(Gru, ZeroParametersHalveState) {
  ParamStore params;
  SplitMix64 rng(1);
  GruCell cell{"g", 3, 4};
  cell.init(params, rng);
  for (auto& [n, p] : params) p.value.fill(0.0);
  Tape t;
  auto vars = bind_params(t, params);
  const auto gv = GruVars::from(cell, vars);
  Tensor h(2, 4);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(i) - 3.0;
  Var out = gru_step(gv, t.constant(h), t.constant(random_tensor(2, 3, rng)));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(t.value(out)[i], 0.5 * h[i]);

  Var zero = gru_step(gv, t.constant(Tensor(2, 4)), t.constant(Tensor(2, 3)));
  for (double v : t.value(zero).values()) EXPECT_EQ(v, 0.0);
}

TEST(Gru, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed + 100);
    ParamStore params;
    GruCell cell{"g", 3, 4};
    cell.init(params, rng);
    params["g.b"].value = random_tensor(1, 12, rng);
    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (auto& [n, p] : params) {
      names.push_back(n);
      inputs.push_back(p.value.rank() == 1 ? Tensor(1, p.value.size(), std::vector<double>(
                                                                           p.value.values().begin(),
                                                                           p.value.values().end()))
                                           : p.value);
    }
    inputs.push_back(random_tensor(2, 4, rng));
    inputs.push_back(random_tensor(2, 3, rng));
    const auto r = check_gradients(inputs, [&](Tape&, const std::vector<Var>& v) {
      const GruVars g{v[std::find(names.begin(), names.end(), "g.W") - names.begin()],
                  v[std::find(names.begin(), names.end(), "g.Uzr") - names.begin()],
                  v[std::find(names.begin(), names.end(), "g.Uh") - names.begin()],
                  v[std::find(names.begin(), names.end(), "g.b") - names.begin()], 4};
      return sum(gru_step(g, v[4], v[5]));
    });
    EXPECT_LT(r.max_rel_err, 1e-5) << "seed " << seed << " at " << r.worst;
  }
}

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  ParamStore p;
  p["w"] = {Tensor(2, 2, 0.7), true};
  AdamState st;
  GradStore g{{"w", Tensor(2, 2, 0.0)}};
  adam_step(p, g, st, AdamConfig{});
  for (double v : p["w"].value.values()) EXPECT_EQ(v, 0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p;
  p["x"] = {Tensor::scalar(1.0), false};
  AdamState st;
  GradStore g{{"x", Tensor::scalar(2.0)}};  // d/dx x^2 at 1
  adam_step(p, g, st, AdamConfig{});
  EXPECT_NEAR(p["x"].value[0], 1.0 - 0.001, 1e-9);
}

TEST(Adam, DecayShrinksWeightsButNotBiases) {
  ParamStore p;
  p["w"] = {Tensor(1, 3, std::vector<double>{1.0, -2.0, 0.5}), true};
  p["b"] = {Tensor(3, 0.4), false};
  AdamState st;
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.lr = 0.01;
  std::vector<double> prev(p["w"].value.values().begin(), p["w"].value.values().end());
  for (int k = 0; k < 50; ++k) {
    adam_step(p, {{"w", Tensor(1, 3)}, {"b", Tensor(3)}}, st, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_LT(std::abs(p["w"].value[i]), std::abs(prev[i]));
      prev[i] = p["w"].value[i];
    }
  }
  for (double v : p["b"].value.values()) EXPECT_EQ(v, 0.4);
  EXPECT_NEAR(l2_penalty(p, 0.1), 0.1 * (prev[0] * prev[0] + prev[1] * prev[1] + prev[2] * prev[2]), 1e-15);
}
