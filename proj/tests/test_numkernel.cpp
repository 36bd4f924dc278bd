#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sfcsim/numkernel.hpp"

using namespace sfcsim;

TEST_CASE("forward basics") {
  Rng rng(1);

  SECTION("zero weights, identity head: output equals the final bias") {
    Mlp m = make_mlp({3, 4, 2}, Act::Relu, Act::Identity, rng);
    for (auto& w : m.w) w.zero();
    m.b[1] = {0.7, -0.3};
    auto y = forward(m, std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE(y == std::vector<double>{0.7, -0.3});
  }
  SECTION("single 1x1 layer arithmetic") {
    Mlp m = make_mlp({1, 1}, Act::Relu, Act::Identity, rng);
    m.w[0].at(0, 0) = 2.0;
    m.b[0][0] = 1.0;
    auto y = forward(m, std::vector<double>{3.0});
    REQUIRE(y[0] == 7.0);
  }
  SECTION("sigmoid head stays strictly inside (0,1)") {
    Mlp m = make_mlp({4, 8, 3}, Act::Tanh, Act::Sigmoid, rng);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> x(4);
      for (auto& v : x) v = rng.uniform(-10.0, 10.0);
      for (double v : forward(m, x)) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
      }
    }
  }
  SECTION("dimension mismatch") {
    Mlp m = make_mlp({3, 2}, Act::Relu, Act::Identity, rng);
    REQUIRE_THROWS_AS(forward(m, std::vector<double>{1.0}), DimensionMismatch);
  }
}

TEST_CASE("backward matches central finite differences on random nets") {
  Rng rng(20);
  for (Act hidden : {Act::Relu, Act::Tanh}) {
    for (Act output : {Act::Identity, Act::Sigmoid, Act::Tanh}) {
      for (int rep = 0; rep < 20; ++rep) {
        Mlp net = make_mlp({5, 7, 6, 3}, hidden, output, rng);
        std::vector<double> x(5), up(3);
        // keep relu preactivations away from the kink where central
        // differences are invalid
        do {
          for (auto& v : x) v = rng.uniform(-1.5, 1.5);
        } while (hidden == Act::Relu && oracles::min_relu_preact(net, x) < 1e-3);
        for (auto& v : up) v = rng.uniform(-1.0, 1.0);
        auto res = backward(net, x, up);
        REQUIRE(oracles::fd_gradient_check(net, x, up, res.grad).worst_rel < 1e-4);
      }
    }
  }
}

TEST_CASE("backward corner cases") {
  Rng rng(21);

  SECTION("zero upstream zeroes every gradient") {
    Mlp net = make_mlp({3, 5, 2}, Act::Tanh, Act::Identity, rng);
    auto res = backward(net, std::vector<double>{0.3, -0.2, 0.9}, std::vector<double>{0.0, 0.0});
    for (const auto& w : res.grad.w)
      for (double g : w.v) REQUIRE(g == 0.0);
    for (double g : res.input_grad) REQUIRE(g == 0.0);
  }
  SECTION("linear 1x1 net: dy/dx equals the weight") {
    Mlp net = make_mlp({1, 1}, Act::Relu, Act::Identity, rng);
    net.w[0].at(0, 0) = 2.0;
    net.b[0][0] = 0.0;
    auto res = backward(net, std::vector<double>{5.0}, std::vector<double>{1.0});
    REQUIRE(res.input_grad[0] == 2.0);
  }
  SECTION("input gradient matches finite differences") {
    Mlp net = make_mlp({4, 6, 2}, Act::Tanh, Act::Sigmoid, rng);
    std::vector<double> x{0.1, -0.4, 0.8, 0.2}, up{0.5, -1.2};
    auto res = backward(net, x, up);
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double num =
          (oracles::fd_objective(net, xp, up) - oracles::fd_objective(net, xm, up)) / (2 * h);
      REQUIRE(std::abs(num - res.input_grad[i]) < 1e-5);
    }
  }
}

TEST_CASE("adam") {
  Rng rng(30);

  SECTION("zero gradient leaves parameters unchanged") {
    Mlp net = make_mlp({2, 3, 1}, Act::Relu, Act::Identity, rng);
    const Mlp before = net;
    AdamState st = AdamState::for_mlp(net, 0.1);
    adam_step(net, MlpGrad::zeros_like(net), st);
    for (std::size_t l = 0; l < net.w.size(); ++l) REQUIRE(net.w[l].v == before.w[l].v);
  }
  SECTION("first step is a bias-corrected unit step") {
    Mlp net = make_mlp({1, 1}, Act::Relu, Act::Identity, rng);
    net.w[0].at(0, 0) = 1.0;
    AdamState st = AdamState::for_mlp(net, 0.1);
    MlpGrad g = MlpGrad::zeros_like(net);
    g.w[0].at(0, 0) = 1.0;
    adam_step(net, g, st);
    REQUIRE(net.w[0].at(0, 0) == Catch::Approx(0.9).margin(1e-8));
  }
  SECTION("200 steps on (w-3)^2 converge within 0.05") {
    // reference Adam, independent of the implementation
    double w_ref = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
      const double g = 2.0 * (w_ref - 3.0);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
      w_ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    REQUIRE(std::abs(w_ref - 3.0) < 0.05);

    Mlp net = make_mlp({1, 1}, Act::Relu, Act::Identity, rng);
    net.w[0].at(0, 0) = 0.0;
    net.b[0][0] = 0.0;
    AdamState st = AdamState::for_mlp(net, 0.1);
    for (int t = 0; t < 200; ++t) {
      MlpGrad g = MlpGrad::zeros_like(net);
      g.w[0].at(0, 0) = 2.0 * (net.w[0].at(0, 0) - 3.0);
      adam_step(net, g, st);
    }
    REQUIRE(std::abs(net.w[0].at(0, 0) - 3.0) < 0.05);
    REQUIRE(net.w[0].at(0, 0) == Catch::Approx(w_ref).margin(1e-9));
  }
}

TEST_CASE("soft_update") {
  Rng rng(40);
  Mlp online = make_mlp({2, 3, 1}, Act::Relu, Act::Identity, rng);
  Mlp target = make_mlp({2, 3, 1}, Act::Relu, Act::Identity, rng);

  SECTION("tau=1 copies, tau=0 freezes") {
    Mlp t1 = target;
    soft_update(t1, online, 1.0);
    for (std::size_t l = 0; l < online.w.size(); ++l) REQUIRE(t1.w[l].v == online.w[l].v);
    Mlp t0 = target;
    soft_update(t0, online, 0.0);
    for (std::size_t l = 0; l < target.w.size(); ++l) REQUIRE(t0.w[l].v == target.w[l].v);
  }
  SECTION("tau=0.5 midpoint") {
    Mlp t = make_mlp({1, 1}, Act::Relu, Act::Identity, rng);
    Mlp o = t;
    t.w[0].at(0, 0) = 0.0;
    o.w[0].at(0, 0) = 2.0;
    soft_update(t, o, 0.5);
    REQUIRE(t.w[0].at(0, 0) == 1.0);
  }
  SECTION("contraction toward online parameters") {
    auto dist = [](const Mlp& a, const Mlp& b) {
      double d = 0.0;
      for (std::size_t l = 0; l < a.w.size(); ++l)
        for (std::size_t i = 0; i < a.w[l].v.size(); ++i) d += std::abs(a.w[l].v[i] - b.w[l].v[i]);
      return d;
    };
    double prev = dist(target, online);
    for (int i = 0; i < 20; ++i) {
      soft_update(target, online, 0.3);
      const double cur = dist(target, online);
      REQUIRE(cur <= prev + 1e-12);
      prev = cur;
    }
  }
  SECTION("architecture mismatch") {
    Mlp small = make_mlp({2, 2, 1}, Act::Relu, Act::Identity, rng);
    REQUIRE_THROWS_AS(soft_update(small, online, 0.5), ArchitectureMismatch);
  }
}

TEST_CASE("replay buffer") {
  Rng rng(50);

  SECTION("ring eviction keeps the newest items") {
    ReplayBuffer<int> buf(3);
    for (int i = 1; i <= 4; ++i) buf.push(i);
    REQUIRE(buf.size() == 3);
    std::vector<int> contents;
    for (std::size_t i = 0; i < buf.size(); ++i) contents.push_back(buf[i]);
    std::sort(contents.begin(), contents.end());
    REQUIRE(contents == std::vector<int>{2, 3, 4});
  }
  SECTION("full-size sample is a permutation") {
    ReplayBuffer<int> buf(5);
    for (int i = 0; i < 5; ++i) buf.push(i);
    auto s = buf.sample(rng, 5);
    std::sort(s.begin(), s.end());
    REQUIRE(s == std::vector<int>{0, 1, 2, 3, 4});
  }
  SECTION("sampling below batch size throws") {
    ReplayBuffer<int> buf(8);
    buf.push(1);
    REQUIRE_THROWS_AS(buf.sample(rng, 2), BufferTooSmall);
  }
  SECTION("uniform sampling frequencies pass a chi-square check") {
    ReplayBuffer<int> buf(10);
    for (int i = 0; i < 10; ++i) buf.push(i);
    std::vector<int> counts(10, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(buf.sample(rng, 1)[0])]++;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    REQUIRE(chi2 < 27.0);  // chi2_9 well past the 0.999 quantile
  }
  SECTION("batch draws have no within-batch repeats") {
    ReplayBuffer<int> buf(20);
    for (int i = 0; i < 20; ++i) buf.push(i);
    for (int rep = 0; rep < 100; ++rep) {
      auto s = buf.sample(rng, 10);
      std::sort(s.begin(), s.end());
      REQUIRE(std::adjacent_find(s.begin(), s.end()) == s.end());
    }
  }
}

TEST_CASE("tensor dump round-trip") {
  Rng rng(60);
  Mlp m = make_mlp({4, 6, 2}, Act::Tanh, Act::Sigmoid, rng);
  std::stringstream ss;
  save_mlp(ss, m);
  Mlp back = load_mlp(ss);
  REQUIRE(back.sizes == m.sizes);
  REQUIRE(back.hidden == m.hidden);
  REQUIRE(back.output == m.output);
  std::vector<double> x{0.2, -0.4, 0.6, 0.1};
  REQUIRE(forward(back, x) == forward(m, x));

  std::stringstream junk("nope 3");
  REQUIRE_THROWS_AS(load_mlp(junk), Error);
}

TEST_CASE("batched forward/backward agree with the single-sample path") {
  Rng rng(70);
  Mlp net = make_mlp({4, 8, 3}, Act::Relu, Act::Tanh, rng);
  const int batch = 5;
  Matrix X(batch, 4), Up(batch, 3);
  for (auto& v : X.v) v = rng.uniform(-1.0, 1.0);
  for (auto& v : Up.v) v = rng.uniform(-1.0, 1.0);
  BatchTrace trace;
  Matrix Y = forward_batch(net, X, &trace);
  MlpGrad batch_grad = MlpGrad::zeros_like(net);
  Matrix Xg = backward_batch(net, trace, Up, batch_grad);

  MlpGrad acc = MlpGrad::zeros_like(net);
  for (int r = 0; r < batch; ++r) {
    std::vector<double> x(X.row(r), X.row(r) + 4), up(Up.row(r), Up.row(r) + 3);
    auto y = forward(net, x);
    for (int c = 0; c < 3; ++c)
      REQUIRE(Y.at(r, c) == Catch::Approx(y[static_cast<std::size_t>(c)]).margin(1e-12));
    auto res = backward(net, x, up);
    for (std::size_t l = 0; l < acc.w.size(); ++l) {
      for (std::size_t i = 0; i < acc.w[l].v.size(); ++i) acc.w[l].v[i] += res.grad.w[l].v[i];
      for (std::size_t i = 0; i < acc.b[l].size(); ++i) acc.b[l][i] += res.grad.b[l][i];
    }
    for (int c = 0; c < 4; ++c)
      REQUIRE(Xg.at(r, c) ==
              Catch::Approx(res.input_grad[static_cast<std::size_t>(c)]).margin(1e-10));
  }
  for (std::size_t l = 0; l < acc.w.size(); ++l)
    for (std::size_t i = 0; i < acc.w[l].v.size(); ++i)
      REQUIRE(batch_grad.w[l].v[i] == Catch::Approx(acc.w[l].v[i]).margin(1e-10));
}
