#include "dsg/autodiff.hpp"
#include "dsg/nn.hpp"
#include "dsg/rng.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace dsg;

TEST_CASE("matmul identity and basic arithmetic") {
  Graph g;
  Tensor i2 = g.constant({2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor a = g.constant({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor out = matmul(i2, a);
  CHECK(out.values()[0] == 1.0);
  CHECK(out.values()[1] == 2.0);
  CHECK(out.values()[2] == 3.0);
  CHECK(out.values()[3] == 4.0);

  Tensor r = matmul(g.constant({1, 2}, std::vector<double>{1, 0}),
                    g.constant({2, 1}, std::vector<double>{0, 5}));
  CHECK(r.values()[0] == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(7);
  Graph g;
  Array av = test::random_array(rng, 12), bv = test::random_array(rng, 8);
  Tensor a = g.constant({3, 4}, av);
  Tensor b = g.constant({4, 2}, bv);
  Tensor c = matmul(a, b);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += av[i * 4 + k] * bv[k * 2 + j];
      CHECK(c.values()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul rejects inner dimension mismatch") {
  Graph g;
  Tensor a = g.zeros({2, 3});
  Tensor b = g.zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("concat basics and gradient splitting") {
  Graph g;
  Tensor a = g.constant({2}, std::vector<double>{1, 2});
  Tensor b = g.constant({1}, std::vector<double>{3});
  Tensor c = concat({a, b});
  CHECK(c.shape() == Shape{3});
  CHECK(c.values()[2] == 3.0);

  // concat([x]) is x itself
  Tensor single = concat({a});
  CHECK(single.id() == a.id());

  // gradient of sum(concat([a,b])) w.r.t. a is all ones
  ParamStore store;
  ParamTensor& pa = store.create("a", {2});
  ParamTensor& pb = store.create("b", {3});
  pa.value << 1.0, 2.0;
  pb.value << 3.0, 4.0, 5.0;
  Graph g2;
  Tensor loss = reduce_sum(concat({g2.param(pa), g2.param(pb)}));
  g2.backward(loss);
  CHECK(pa.grad[0] == 1.0);
  CHECK(pa.grad[1] == 1.0);
  CHECK(pb.grad[2] == 1.0);

  CHECK_THROWS_AS(concat({g.zeros({2, 3}), g.zeros({3, 2})}, 0), std::invalid_argument);
}

TEST_CASE("elementwise ops") {
  Graph g;
  Tensor x = g.constant({3}, std::vector<double>{-2, 0, 3});
  Tensor r = relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[2] == 3.0);
  CHECK(exp(g.scalar(0.0)).scalar() == 1.0);

  ParamStore store;
  ParamTensor& p = store.create("x", {1});
  p.value[0] = 3.0;
  Graph g2;
  Tensor loss = reduce_sum(relu(g2.param(p)));
  g2.backward(loss);
  CHECK(p.grad[0] == 1.0);
}

TEST_CASE("shared tensor accumulates gradient from both consumers") {
  ParamStore store;
  ParamTensor& p = store.create("x", {1});
  p.value[0] = 1.5;
  Graph g;
  Tensor x = g.param(p);
  g.backward(reduce_sum(add(x, x)));
  CHECK(p.grad[0] == 2.0);
}

TEST_CASE("softmax_cross_entropy values") {
  Graph g;
  // uniform logits, C=4 -> ln 4
  Tensor u = g.zeros({1, 4});
  CHECK(softmax_cross_entropy(u, {0}).scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // stabilized: huge logit on the target
  Tensor big = g.constant({1, 3}, std::vector<double>{1000.0, 0.0, 0.0});
  CHECK(softmax_cross_entropy(big, {0}).scalar() == doctest::Approx(0.0).epsilon(1e-12));

  // random case vs the naive formula at small magnitudes
  Rng rng(3);
  Array lv = test::random_array(rng, 8, -1.0, 1.0);
  Tensor l = g.constant({2, 4}, lv);
  std::vector<int> targets{1, 3};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    double z = 0.0;
    for (int c = 0; c < 4; ++c) z += std::exp(lv[i * 4 + c]);
    expect -= std::log(std::exp(lv[i * 4 + targets[i]]) / z);
  }
  expect /= 2.0;
  CHECK(softmax_cross_entropy(l, targets).scalar() == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_cross_entropy(l, {0, 4}), std::invalid_argument);
}

TEST_CASE("smooth_l1 worked values") {
  Graph g;
  auto loss1 = [&](double d) {
    Tensor p = g.constant({1}, std::vector<double>{d});
    Tensor t = g.constant({1}, std::vector<double>{0.0});
    return smooth_l1(p, t).scalar();
  };
  CHECK(loss1(0.0) == 0.0);
  CHECK(loss1(0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(loss1(2.0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK_THROWS_AS(smooth_l1(g.zeros({2}), g.zeros({3})), std::invalid_argument);
}

TEST_CASE("softmax_weights properties") {
  Graph g;
  Tensor eq = softmax_weights(g.zeros({4}));
  for (int i = 0; i < 4; ++i) CHECK(eq.values()[i] == doctest::Approx(0.25).epsilon(1e-15));

  CHECK(softmax_weights(g.constant({1}, std::vector<double>{3.0})).values()[0] == 1.0);

  Tensor two = softmax_weights(g.constant({2}, std::vector<double>{0.0, std::log(3.0)}));
  CHECK(two.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(two.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

  // sums to 1 and shift-invariant
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Array s = test::random_array(rng, 6, -5.0, 5.0);
    Tensor w1 = softmax_weights(g.constant({6}, s));
    Tensor w2 = softmax_weights(g.constant({6}, Array(s + 17.25)));
    CHECK(std::abs(w1.values().sum() - 1.0) < 1e-12);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(w1.values()[i] - w2.values()[i]) < 1e-12);
  }
}

TEST_CASE("backward requires a scalar root and zeroes untouched params") {
  ParamStore store;
  ParamTensor& used = store.create("used", {2});
  ParamTensor& unused = store.create("unused", {2});
  used.value << 1.0, 2.0;
  unused.value << 3.0, 4.0;
  Graph g;
  Tensor loss = reduce_sum(g.param(used));
  Tensor not_scalar = g.param(used);
  CHECK_THROWS_AS(g.backward(not_scalar), std::invalid_argument);
  store.zero_grads();
  g.backward(loss);
  CHECK(unused.grad[0] == 0.0);
  CHECK(unused.grad[1] == 0.0);
  CHECK(used.grad[0] == 1.0);
}

TEST_CASE("grad of sum(W x) is the outer product structure") {
  ParamStore store;
  Rng rng(5);
  ParamTensor& w = store.create_uniform("W", {3, 2}, rng);
  Graph g;
  Array xv(2);
  xv << 0.5, -1.25;
  Tensor x = g.constant({2, 1}, xv);
  g.backward(reduce_sum(matmul(g.param(w), x)));
  for (int i = 0; i < 3; ++i) {
    CHECK(w.grad[i * 2 + 0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w.grad[i * 2 + 1] == doctest::Approx(-1.25).epsilon(1e-15));
  }
}

TEST_CASE("non-finite forward values are an error") {
  Graph g;
  Tensor big = g.constant({1}, std::vector<double>{1e308});
  CHECK_THROWS_AS(exp(big), std::runtime_error);
}

TEST_CASE("finite differences match analytic gradients for a composed net") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ParamStore store;
    Rng rng(seed);
    MlpParams mlp = make_mlp(store, "net", {4, 6, 3}, rng);
    ParamTensor& scores = store.create("scores", {5});
    for (long i = 0; i < scores.size(); ++i) scores.value[i] = rng.uniform(-2.0, 2.0);
    Array xv = test::random_array(rng, 8);

    auto build = [&](Graph& g) {
      Tensor x = g.constant({2, 4}, xv);
      Tensor h = mlp_forward(g, mlp, x);
      Tensor ce = softmax_cross_entropy(h, {0, 2});
      Tensor w = softmax_weights(g.param(scores));
      Tensor mixed = mul(reduce_sum(exp(scalar_mul(slice_cols(h, 0, 2), 0.1))),
                         reduce_sum(mul(w, w)));
      Tensor sl1 = smooth_l1(h, g.zeros({2, 3}));
      return add(add(ce, scalar_mul(mixed, 0.05)), sl1);
    };
    auto loss_value = [&]() {
      Graph g;
      return build(g).scalar();
    };
    auto compute = [&]() {
      Graph g;
      Tensor loss = build(g);
      store.zero_grads();
      g.backward(loss);
    };
    CHECK(test::gradcheck(store, loss_value, compute) < 1e-4);
  }
}

TEST_CASE("forward passes are bitwise reproducible") {
  auto run = [](std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    MlpParams mlp = make_mlp(store, "net", {5, 8, 4}, rng);
    Graph g;
    Tensor x = g.constant({3, 5}, test::random_array(rng, 15));
    return Array(mlp_forward(g, mlp, x).values());
  };
  Array a = run(42), b = run(42);
  for (long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
