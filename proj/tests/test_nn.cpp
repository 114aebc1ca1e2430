#include "dsg/nn.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace dsg;

TEST_CASE("sgd_step worked examples") {
  ParamStore store;
  ParamTensor& p = store.create("p", {1});

  SUBCASE("momentum 0") {
    p.grad[0] = 1.0;
    sgd_step(p, 0.1, 0.0);
    CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-15));
  }

  SUBCASE("zero gradient leaves parameters unchanged") {
    p.value[0] = 2.5;
    for (int i = 0; i < 5; ++i) sgd_step(p, 0.1, 0.9);
    CHECK(p.value[0] == 2.5);
  }

  SUBCASE("two steps with momentum match the hand recurrence") {
    double g1 = 0.3, g2 = -0.7, lr = 0.05, mu = 0.9;
    p.grad[0] = g1;
    sgd_step(p, lr, mu);
    p.grad[0] = g2;
    sgd_step(p, lr, mu);
    // v1 = g1; p1 = -lr*v1; v2 = mu*v1 + g2; p2 = p1 - lr*v2
    double v1 = g1;
    double p1 = -lr * v1;
    double v2 = mu * v1 + g2;
    double p2 = p1 - lr * v2;
    CHECK(p.value[0] == doctest::Approx(p2).epsilon(1e-15));
  }
}

TEST_CASE("glorot init is inside the fan bound and biases are zero") {
  ParamStore store;
  Rng rng(3);
  MlpParams mlp = make_mlp(store, "m", {10, 7, 4}, rng);
  double lim0 = std::sqrt(6.0 / (10 + 7));
  for (long i = 0; i < mlp.layers[0].weight->size(); ++i) {
    CHECK(std::abs(mlp.layers[0].weight->value[i]) <= lim0);
  }
  for (long i = 0; i < mlp.layers[0].bias->size(); ++i) {
    CHECK(mlp.layers[0].bias->value[i] == 0.0);
  }
  CHECK(mlp.input_width() == 10);
  CHECK(mlp.output_width() == 4);
  CHECK(mlp.layers[0].act == Activation::kReLU);
  CHECK(mlp.layers[1].act == Activation::kIdentity);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParamStore store;
  store.create("x", {2});
  CHECK_THROWS_AS(store.create("x", {3}), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips bitwise") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "dsg_test_ckpt.bin";

  ParamStore store;
  Rng rng(9);
  make_mlp(store, "net", {5, 6, 2}, rng);
  store.create("table", {4, 3});
  store.find("table")->value[5] = 0.1 + 0.2;  // a value with FP dust

  save_params(store, path.string());

  ParamStore loaded;
  Rng rng2(1234);  // different init must be fully overwritten
  make_mlp(loaded, "net", {5, 6, 2}, rng2);
  loaded.create("table", {4, 3});
  load_params(loaded, path.string());

  for (std::size_t i = 0; i < store.count(); ++i) {
    const ParamTensor& a = store.at(i);
    const ParamTensor& b = loaded.at(i);
    REQUIRE(a.size() == b.size());
    for (long k = 0; k < a.size(); ++k) CHECK(a.value[k] == b.value[k]);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint shape mismatch names the tensor") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "dsg_test_ckpt2.bin";
  ParamStore store;
  store.create("alpha", {2, 2});
  save_params(store, path.string());

  ParamStore other;
  other.create("alpha", {3, 2});
  try {
    load_params(other, path.string());
    FAIL("expected a shape mismatch error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint bad magic is rejected") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "dsg_test_ckpt3.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234";
  }
  ParamStore store;
  CHECK_THROWS_AS(load_params(store, path.string()), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("mlp gradcheck against finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ParamStore store;
    Rng rng(seed);
    MlpParams mlp = make_mlp(store, "net", {6, 8, 8, 3}, rng);
    Array xv = test::random_array(rng, 18);
    auto value = [&]() {
      Graph g;
      return smooth_l1(mlp_forward(g, mlp, g.constant({3, 6}, xv)), g.zeros({3, 3})).scalar();
    };
    auto grads = [&]() {
      Graph g;
      Tensor loss = smooth_l1(mlp_forward(g, mlp, g.constant({3, 6}, xv)), g.zeros({3, 3}));
      store.zero_grads();
      g.backward(loss);
    };
    CHECK(test::gradcheck(store, value, grads) < 1e-4);
  }
}
