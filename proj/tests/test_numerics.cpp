#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include "aurum/adam.hpp"
#include "aurum/autodiff.hpp"
#include "aurum/error.hpp"
#include "aurum/parallel.hpp"
#include "aurum/rng.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace aurum;
using namespace aurum::nn;

namespace {

template <class T>
Tensor<T> random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor<T> t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(0.0, scale));
  return t;
}

// Small network touching every op: attention-like mixing, layer norm, GELU,
// slicing/concatenation, gathers and an MSE head.
struct TinyNet {
  Parameter<double> w1, b1, g, beta, w2, b2, q;
  Tensor<double> x, target;
  std::vector<std::size_t> pick{2, 0, 3, 3};

  explicit TinyNet(Rng& rng)
      : w1("w1", random_tensor<double>(6, 8, rng, 0.5)),
        b1("b1", random_tensor<double>(1, 8, rng, 0.1)),
        g("g", random_tensor<double>(1, 8, rng, 0.2)),
        beta("beta", random_tensor<double>(1, 8, rng, 0.1)),
        w2("w2", random_tensor<double>(8, 5, rng, 0.5)),
        b2("b2", random_tensor<double>(1, 5, rng, 0.1)),
        q("q", random_tensor<double>(1, 8, rng, 0.5)),
        x(random_tensor<double>(4, 6, rng)),
        target(random_tensor<double>(4, 5, rng)) {
    for (std::size_t i = 0; i < g.value.size(); ++i) g.value[i] += 1.0;
  }

  std::vector<Parameter<double>*> params() { return {&w1, &b1, &g, &beta, &w2, &b2, &q}; }

  Var<double> loss(Graph<double>& G) {
    auto in = G.input(x);
    auto h = add_row(matmul(in, G.param(w1)), G.param(b1));
    auto att = softmax(matmul_nt(h, h, 1.0 / std::sqrt(8.0)));
    h = add(h, matmul(att, h));
    h = layer_norm(h, G.param(g), G.param(beta));
    h = gelu(h);
    h = mul(h, repeat_row(G.param(q), 4));
    auto left = slice_cols(h, 0, 3), right = slice_cols(h, 3, 5);
    h = concat_cols<double>({right, left});
    h = concat_rows<double>({slice_rows(h, 2, 2), slice_rows(h, 0, 2)});
    h = gather_rows(h, std::span<const std::size_t>(pick));
    auto out = add_row(matmul(h, G.param(w2)), G.param(b2));
    return add(mse(out, G.input(target)), scale(mean(sub(out, G.input(target))), 0.3));
  }
};

}  // namespace

TEST_CASE("forward shape laws and shape errors") {
  Graph<float> g;
  Rng rng(1);
  auto a = g.input(random_tensor<float>(2, 3, rng));
  auto b = g.input(random_tensor<float>(3, 4, rng));
  CHECK(matmul(a, b).value().shape() == std::array<std::size_t, 2>{2, 4});
  try {
    matmul(b, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3x4") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("softmax rows sum to one and layer_norm standardizes") {
  Graph<float> g;
  Rng rng(2);
  auto x = g.input(random_tensor<float>(16, 37, rng, 4.0));
  const auto s = softmax(x).value();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double total = 0.0;
    for (float v : s.row(r)) total += v;
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  auto ones = g.input(Tensor<float>(1, 37, 1.0f));
  auto zeros = g.input(Tensor<float>(1, 37, 0.0f));
  const auto n = layer_norm(x, ones, zeros).value();
  for (std::size_t r = 0; r < n.rows(); ++r) {
    double m = 0.0, v = 0.0;
    for (float e : n.row(r)) m += e;
    m /= 37.0;
    for (float e : n.row(r)) v += (e - m) * (e - m);
    v /= 37.0;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-4);  // eps = 1e-5 in the denominator
  }
}

TEST_CASE("backward analytic cases") {
  Graph<double> g;
  Parameter<double> x("x", Tensor<double>(1, 2, std::vector<double>{1.0, 2.0}));
  Parameter<double> unused("unused", Tensor<double>(1, 2, 3.0));
  auto xv = g.param(x);
  g.param(unused);
  g.backward(sum(mul(xv, xv)));
  CHECK(x.grad[0] == 2.0);
  CHECK(x.grad[1] == 4.0);
  CHECK(unused.grad[0] == 0.0);

  Graph<double> g2;
  Parameter<double> y("y", Tensor<double>(3, 2, 0.7));
  g2.backward(sum(g2.param(y)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.grad[i] == 1.0);

  Graph<double> g3;
  auto v = g3.input(Tensor<double>(2, 2, 1.0), true);
  CHECK_THROWS_AS(g3.backward(v), ContractError);
}

TEST_CASE("backward visits each reachable node once") {
  Graph<double> g;
  Parameter<double> w("w", Tensor<double>(2, 2, 0.5));
  auto a = g.param(w);
  auto b = add(a, a);
  auto c = mul(b, a);
  g.backward(sum(c));
  CHECK(g.visited() == g.size());
  // d/dw sum(2w * w) = 4w
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad[i] == doctest::Approx(2.0));
}

TEST_CASE("gradient check on random small networks") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    TinyNet net(rng);
    std::size_t n_params = 0;
    for (auto* p : net.params()) n_params += p->value.size();
    REQUIRE(n_params <= 1000);
    const auto result = aurum::testing::check_gradients(net.params(), [&](bool backward) {
      for (auto* p : net.params()) p->zero_grad();
      Graph<double> G;
      auto loss = net.loss(G);
      if (backward) G.backward(loss);
      return loss.value()[0];
    });
    CAPTURE(result.worst);
    CHECK(result.pass_rate() >= 0.99);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(3);
  TinyNet net(rng);
  auto grads_of = [&](double a, double b) {
    for (auto* p : net.params()) p->zero_grad();
    Graph<double> G;
    auto l1 = net.loss(G);
    auto l2 = sum(mul(G.param(net.w2), G.param(net.w2)));
    G.backward(add(scale(l1, a), scale(l2, b)));
    std::vector<double> out;
    for (auto* p : net.params())
      for (std::size_t i = 0; i < p->grad.size(); ++i) out.push_back(p->grad[i]);
    return out;
  };
  const auto g1 = grads_of(1.0, 0.0), g2 = grads_of(0.0, 1.0), mix = grads_of(2.5, -0.75);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double expect = 2.5 * g1[i] - 0.75 * g2[i];
    CHECK(std::abs(mix[i] - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("ops are deterministic") {
  Rng r1(4), r2(4);
  TinyNet a(r1), b(r2);
  Graph<double> ga, gb;
  CHECK(a.loss(ga).value() == b.loss(gb).value());
}

TEST_CASE("adam single step and fixed point") {
  Parameter<double> p("p", Tensor<double>(1, 4, std::vector<double>{1, -2, 3, 0.5}));
  p.grad = Tensor<double>(1, 4, std::vector<double>{0.3, -4.0, 1e-3, 0.0});
  AdamState<double> state;
  Parameter<double>* list[] = {&p};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step<double>(list, state, cfg);
  // Bias-corrected first step moves each coordinate by ~lr * sign(g).
  CHECK(p.value[0] == doctest::Approx(1 - 0.01).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-2 + 0.01).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(3 - 0.01).epsilon(1e-4));
  CHECK(p.value[3] == 0.5);  // zero gradient leaves the weight alone

  Parameter<double> q("q", Tensor<double>(2, 2, 1.5));
  AdamState<double> s2;
  Parameter<double>* l2[] = {&q};
  for (int i = 0; i < 5; ++i) adam_step<double>(l2, s2, cfg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(q.value[i] == 1.5);

  Parameter<double> r("r", Tensor<double>(2, 2, 1.0));
  r.grad = Tensor<double>(1, 4, 1.0);
  AdamState<double> s3;
  Parameter<double>* l3[] = {&r};
  CHECK_THROWS_AS(adam_step<double>(l3, s3, cfg), ShapeError);
}

TEST_CASE("adam runs are bitwise reproducible") {
  auto run = [] {
    Rng rng(42);
    TinyNet net(rng);
    AdamState<double> state;
    auto params = net.params();
    for (int step = 0; step < 10; ++step) {
      for (auto* p : params) p->zero_grad();
      Graph<double> G;
      G.backward(net.loss(G));
      adam_step<double>(params, state, AdamConfig{});
    }
    return net.w1.value;
  };
  CHECK(run() == run());
}

TEST_CASE("rng draws") {
  Rng rng(7);
  CHECK(rng.permutation(1) == std::vector<std::size_t>{0});
  auto all = rng.choice_without_replacement(50, 50);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  CHECK_THROWS_AS(rng.choice_without_replacement(3, 4), ParameterError);

  const auto pick = rng.choice_without_replacement(100, 10);
  CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 10);

  Rng normal(2024);
  double total = 0.0;
  for (int i = 0; i < 100000; ++i) total += normal.normal(0.0, 1.0);
  CHECK(std::abs(total / 100000.0) <= 0.02);

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.below(7) < 7);
  }
}

TEST_CASE("rng sequence is fixed") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // splitmix64 reference value for state 0 (first output).
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xE220A8397B1DCDAFull);
  CHECK(Rng::derive(1, 2).next_u64() == Rng::derive(1, 2).next_u64());
  CHECK(Rng::derive(1, 2).next_u64() != Rng::derive(1, 3).next_u64());
}

TEST_CASE("permutations are uniform over small n") {
  Rng rng(99);
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[rng.permutation(3)];
  CHECK(counts.size() == 6);
  double chi2 = 0.0;
  for (const auto& [perm, n] : counts) chi2 += (n - draws / 6.0) * (n - draws / 6.0) / (draws / 6.0);
  CHECK(chi2 < 15.09);  // chi-square, 5 dof, 1%
}

TEST_CASE("parallel_for covers every index and reports the lowest failure") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  try {
    parallel_for(100, 3, [](std::size_t i) {
      if (i == 40 || i == 90) throw DataError("at " + std::to_string(i));
    });
    FAIL("expected a throw");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("at 40") != std::string::npos);
  }
}
