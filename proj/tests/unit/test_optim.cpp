#include <doctest.h>

#include <cmath>

#include "step/errors.hpp"
#include "step/optim.hpp"

using namespace step;

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
  std::vector<double> p{1.0, -2.0, 0.5}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  const auto before = p;
  AdamHyper h;
  for (std::size_t s = 1; s <= 5; ++s) adam_step<double>(p, g, m, v, s, h);
  CHECK(p == before);
}

TEST_CASE("first Adam step moves each parameter by about lr in the gradient's sign") {
  std::vector<double> p{0.0, 0.0, 0.0}, g{3.0, -1e-3, 250.0}, m(3, 0.0), v(3, 0.0);
  AdamHyper h;
  h.learning_rate = 0.01;
  adam_step<double>(p, g, m, v, 1, h);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("two Adam steps against a hand computation") {
  std::vector<double> p{1.0}, m{0.0}, v{0.0};
  AdamHyper h;
  h.learning_rate = 0.1;
  h.weight_decay = 0.01;
  std::vector<double> g1{2.0}, g2{-1.0};
  adam_step<double>(p, g1, m, v, 1, h);
  // m = 0.2, v = 0.004; m_hat = 2, v_hat = 4; p = 1 - 0.1 * (2 / (2 + 1e-8) + 0.01)
  const double p1 = 1.0 - 0.1 * (2.0 / (2.0 + 1e-8) + 0.01 * 1.0);
  CHECK(p[0] == doctest::Approx(p1).epsilon(1e-12));
  adam_step<double>(p, g2, m, v, 2, h);
  const double m2 = 0.9 * 0.2 + 0.1 * -1.0, v2 = 0.999 * 0.004 + 0.001 * 1.0;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  const double p2 = p1 - 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * p1);
  CHECK(p[0] == doctest::Approx(p2).epsilon(1e-12));
}

TEST_CASE("Adam contract checks") {
  std::vector<double> p{1.0}, g{1.0}, m{0.0}, v{0.0}, shorter;
  CHECK_THROWS_AS(adam_step<double>(p, g, m, v, 0, AdamHyper{}), ContractError);
  CHECK_THROWS_AS(adam_step<double>(p, shorter, m, v, 1, AdamHyper{}), ShapeError);
}

TEST_CASE("SGD with momentum") {
  std::vector<double> p{1.0}, vel{0.0}, g{0.5};
  sgd_step<double>(p, g, vel, 0.1, 0.9, 0.0);
  CHECK(p[0] == doctest::Approx(0.95));
  sgd_step<double>(p, g, vel, 0.1, 0.9, 0.0);
  // velocity = 0.9 * 0.5 + 0.5 = 0.95
  CHECK(p[0] == doctest::Approx(0.95 - 0.095));
}

TEST_CASE("gradient clipping rescales to the max norm") {
  auto model = init_params<double>(make_probe_config(ProbeVariant::Linear, 2, 1, 2, 1, 1), 0);
  // classifier.weight [2,2] and classifier.bias [2]
  auto g0 = model.params.at("classifier.weight").mutable_grad();
  auto g1 = model.params.at("classifier.bias").mutable_grad();
  g0[0] = 3.0;
  g1[1] = 4.0;
  CHECK(clip_grad_norm(model, 10.0) == doctest::Approx(5.0));
  CHECK(g0[0] == 3.0);
  CHECK(clip_grad_norm(model, 1.0) == doctest::Approx(5.0));
  CHECK(g0[0] == doctest::Approx(0.6));
  CHECK(g1[1] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(model, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("optimizer steps every parameter tensor") {
  auto model = init_params<double>(make_probe_config(ProbeVariant::Step, 4, 2, 2, 2, 1), 0);
  for (auto& [name, t] : model.params)
    for (auto& g : t.mutable_grad()) g = 1.0;
  auto before = model.clone();
  Optimizer<double> opt(model, OptimizerKind::Adam, AdamHyper{}, 0.9);
  opt.step(model, 1e-3);
  CHECK(opt.steps_taken() == 1);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto a = model.params.tensor(i).data(), b = before.params.tensor(i).data();
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j] - 1e-3).epsilon(1e-9));
  }
  auto other = init_params<double>(make_probe_config(ProbeVariant::Linear, 4, 2, 2, 2, 1), 0);
  CHECK_THROWS_AS(opt.step(other, 1e-3), ContractError);
}
