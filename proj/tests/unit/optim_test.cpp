#include <gtest/gtest.h>

#include <cmath>

#include "sbd/error.hpp"
#include "sbd/optim.hpp"

namespace sbd {
namespace {

Parameter scalar_param(const std::string& name, float value) {
  return {name, Tensor::from_data({1}, {value}, true)};
}

void set_grad(Parameter& p, float g) {
  p.value.zero_grad();
  p.value.grad()[0] = g;
}

TEST(Sgd, ScalarRecurrence) {
  Parameter p = scalar_param("w", 1.0f);
  SgdOptions o{0.1, 0.9, 0.01};
  Sgd sgd({p}, o);
  double w = 1.0, v = 0.0;
  const double grads[] = {0.5, -0.2, 0.3, 0.0, 1.0};
  for (double g : grads) {
    set_grad(p, static_cast<float>(g));
    sgd.step();
    v = o.momentum * v + g + o.weight_decay * w;
    w -= o.lr * v;
    EXPECT_NEAR(p.value.item(), w, 1e-6);
  }
}

TEST(Sgd, WeightDecayAppliesToBiases) {
  Parameter b = scalar_param("b", 2.0f);
  b.is_bias = true;
  Sgd sgd({b}, {0.1, 0.0, 0.5});
  set_grad(b, 0.0f);
  sgd.step();
  EXPECT_NEAR(b.value.item(), 2.0 - 0.1 * 0.5 * 2.0, 1e-6);
}

TEST(Sgd, MissingGradientIsUsageError) {
  Parameter p = scalar_param("w", 1.0f);
  Sgd sgd({p}, {});
  EXPECT_THROW(sgd.step(), UsageError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (float g : {0.3f, -7.0f, 1e-3f}) {
    Parameter p = scalar_param("w", 0.0f);
    Adam adam({p}, {0.01, 0.9, 0.999, 1e-8});
    set_grad(p, g);
    adam.step();
    EXPECT_NEAR(p.value.item(), -0.01 * (g > 0 ? 1 : -1), 1e-6);
  }
}

TEST(Adam, ScalarRecurrence) {
  Parameter p = scalar_param("w", 0.5f);
  AdamOptions o{0.05, 0.8, 0.99, 1e-6};
  Adam adam({p}, o);
  double w = 0.5, m = 0, v = 0;
  const double grads[] = {0.4, 0.1, -0.6, 0.2, 0.0, 0.9};
  for (int t = 1; t <= 6; ++t) {
    const double g = grads[t - 1];
    set_grad(p, static_cast<float>(g));
    adam.step();
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, t)), vh = v / (1 - std::pow(o.beta2, t));
    w -= o.lr * mh / (std::sqrt(vh) + o.epsilon);
    EXPECT_NEAR(p.value.item(), w, 1e-5) << "step " << t;
  }
  EXPECT_EQ(adam.steps(), 6);
}

TEST(Adam, StateRoundtripContinuesIdentically) {
  Parameter a = scalar_param("w", 0.5f), b = scalar_param("w", 0.5f);
  Adam first({a}, {}), second({b}, {});
  set_grad(a, 0.3f);
  first.step();
  set_grad(a, -0.1f);
  first.step();
  second.load_state(first.state());
  b.value.data()[0] = a.value.item();
  EXPECT_EQ(second.steps(), 2);
  set_grad(a, 0.7f);
  set_grad(b, 0.7f);
  first.step();
  second.step();
  EXPECT_EQ(a.value.item(), b.value.item());
}

TEST(Sgd, StateRoundtripContinuesIdentically) {
  Parameter a = scalar_param("w", 0.5f), b = scalar_param("w", 0.5f);
  Sgd first({a}, {}), second({b}, {});
  set_grad(a, 0.3f);
  first.step();
  second.load_state(first.state());
  b.value.data()[0] = a.value.item();
  set_grad(a, -0.2f);
  set_grad(b, -0.2f);
  first.step();
  second.step();
  EXPECT_EQ(a.value.item(), b.value.item());
}

TEST(OptimizerState, MissingOrMisshapedEntries) {
  Parameter p{"w", Tensor({2, 3}, 0.0f, true)};
  Adam adam({p}, {});
  EXPECT_THROW(adam.load_state({}), FormatError);
  auto state = adam.state();
  state[1].tensor = Tensor({3, 2});
  EXPECT_THROW(adam.load_state(state), DimensionError);
  Sgd sgd({p}, {});
  EXPECT_THROW(sgd.load_state({}), FormatError);
}

TEST(InitGaussian, StatisticsAndZeroBiases) {
  std::vector<Parameter> params{{"w", Tensor({200, 100})}, {"b", Tensor({50}, 3.0f), true},
                                {"he", Tensor({100, 100})}};
  params[2].init_std = 0.5;
  init_gaussian(params, 0.01, 7);
  for (float v : params[1].value.data()) EXPECT_EQ(v, 0.0f);
  auto stats = [](const Tensor& t) {
    double s = 0, sq = 0;
    for (float v : t.data()) {
      s += v;
      sq += double(v) * v;
    }
    const double n = static_cast<double>(t.numel());
    return std::pair{s / n, std::sqrt(sq / n - (s / n) * (s / n))};
  };
  const auto [m0, s0] = stats(params[0].value);
  EXPECT_NEAR(m0, 0.0, 5 * 0.01 / std::sqrt(20000.0));
  EXPECT_NEAR(s0, 0.01, 0.01 * 0.03);
  const auto [m1, s1] = stats(params[2].value);
  EXPECT_NEAR(m1, 0.0, 5 * 0.5 / 100.0);
  EXPECT_NEAR(s1, 0.5, 0.5 * 0.03);
}

TEST(InitGaussian, DeterministicPerSeed) {
  std::vector<Parameter> a{{"w", Tensor({64})}}, b{{"w", Tensor({64})}}, c{{"w", Tensor({64})}};
  init_gaussian(a, 1.0, 3);
  init_gaussian(b, 1.0, 3);
  init_gaussian(c, 1.0, 4);
  EXPECT_TRUE(std::equal(a[0].value.data().begin(), a[0].value.data().end(), b[0].value.data().begin()));
  EXPECT_FALSE(std::equal(a[0].value.data().begin(), a[0].value.data().end(), c[0].value.data().begin()));
}

}  // namespace
}  // namespace sbd
