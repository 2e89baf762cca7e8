#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cathnav/nn.hpp"

using namespace cathnav::nn;

TEST_CASE("parameter gradients match finite differences for every trainer shape") {
  for (const std::vector<int>& shape : {std::vector<int>{8, 64, 64, 4}, std::vector<int>{10, 64, 64, 1}}) {
    Mlp net(shape);
    std::mt19937_64 rng(7);
    net.init(rng);
    CHECK(gradient_check(net, 100, 13) < 1e-4);
  }
}

TEST_CASE("input gradient matches finite differences") {
  Mlp net({5, 16, 3});
  std::mt19937_64 rng(2);
  net.init(rng);
  const std::vector<double> x{0.3, -1.2, 0.8, 0.1, -0.4};
  Mlp::Tape tape;
  const auto y = net.forward(x, tape);
  std::vector<double> dy{1.0, -2.0, 0.5}, grad(net.param_count(), 0.0);
  const auto dx = net.backward(tape, dy, grad);
  auto f = [&](std::vector<double> v) {
    const auto o = net.forward(v);
    return o[0] - 2.0 * o[1] + 0.5 * o[2];
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto a = x, b = x;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    CHECK(dx[i] == doctest::Approx((f(a) - f(b)) / 2e-6).epsilon(1e-6));
  }
  CHECK(y.size() == 3);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), NnError);
}

TEST_CASE("squashed Gaussian density integrates to one") {
  for (double mean : {-1.5, 0.0, 0.7})
    for (double log_std : {-1.0, 0.0, 0.5}) {
      const double s = std::exp(log_std);
      const int n = 200000;
      const double lo = mean - 12.0 * s, hi = mean + 12.0 * s;
      const double du = (hi - lo) / n;
      double total = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double u = lo + i * du;
        const std::vector<double> head{mean, log_std};
        const std::vector<double> xi{(u - mean) / s};
        const auto o = squashed_gaussian(head, xi);
        // density over a, times da/du
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        total += w * std::exp(o.log_prob) * (1.0 - std::tanh(u) * std::tanh(u)) * du;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("log-std clamp and stable log(1 - tanh^2)") {
  const std::vector<double> head{0.0, 5.0}, xi{0.5};
  const auto o = squashed_gaussian(head, xi);
  CHECK(o.log_std[0] == kLogStdMax);
  CHECK(o.log_std_clamped[0]);
  for (double u : {-3.0, -0.5, 0.0, 0.2, 2.0}) CHECK(log1m_tanh_sq(u) == doctest::Approx(std::log(1.0 - std::tanh(u) * std::tanh(u))));
  CHECK(log1m_tanh_sq(40.0) == doctest::Approx(std::log(4.0) - 80.0));
  CHECK(std::isfinite(log1m_tanh_sq(800.0)));
  const auto big = squashed_gaussian(std::vector<double>{50.0, 0.0}, std::vector<double>{0.0});
  CHECK(big.action[0] < 1.0);
  CHECK(std::isfinite(big.log_prob));
}

TEST_CASE("Adam first step moves each parameter by lr against the gradient sign") {
  Adam opt(3, {0.01, 0.9, 0.999, 1e-8});
  std::vector<double> p{1.0, 2.0, 3.0};
  opt.step(p, {0.5, -2.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.99));
  CHECK(p[1] == doctest::Approx(2.01));
  CHECK(p[2] == doctest::Approx(3.0));
  CHECK(opt.steps() == 1);
}

TEST_CASE("checkpoint round trip is exact") {
  Mlp a({8, 64, 64, 4}), b({10, 64, 64, 1});
  std::mt19937_64 rng(3);
  a.init(rng);
  b.init(rng);
  const auto path = std::filesystem::temp_directory_path() / "cathnav_test_ckpt.bin";
  save_checkpoint(path, {{"actor", &a}, {"q1", &b}});
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "actor");
  CHECK(back[0].second.sizes() == a.sizes());
  CHECK(back[0].second.params == a.params);
  CHECK(back[1].second.params == b.params);

  std::ofstream(path, std::ios::binary) << "NOTACKPT";
  CHECK_THROWS_AS(load_checkpoint(path), NnError);
  std::filesystem::remove(path);
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
}
