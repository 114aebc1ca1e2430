#include "dsg/dsggen.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dsg;

namespace {

struct GpiFixture {
  ParamStore store;
  GpiParams params;
  int b = 0;
  int zd = 0;
  MatrixRM z_nodes;
  MatrixRM z_pairs;
  std::vector<std::pair<int, int>> pairs;

  GpiFixture(int b_, int zd_, int hidden, int width, std::uint64_t seed) : b(b_), zd(zd_) {
    Rng rng(seed);
    params = make_gpi_params(store, "gpi", zd, hidden, width, width, width, rng);
    z_nodes = MatrixRM(b, zd);
    for (int i = 0; i < b; ++i) {
      for (int d = 0; d < zd; ++d) z_nodes(i, d) = rng.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < b; ++j) {
        if (i != j) pairs.emplace_back(i, j);
      }
    }
    z_pairs = MatrixRM(static_cast<long>(pairs.size()), zd);
    // Pair features must be symmetric in the endpoints for permutation tests,
    // matching union-box features in the real pipeline.
    for (size_t p = 0; p < pairs.size(); ++p) {
      auto [i, j] = pairs[p];
      for (int d = 0; d < zd; ++d) z_pairs(static_cast<long>(p), d) =
          0.5 * (z_nodes(i, d) + z_nodes(j, d)) + 0.1 * (z_nodes(i, d) * z_nodes(j, d));
    }
  }

  DsgOutput forward(Graph& g, GpiMode mode) const {
    Tensor zn = g.constant({b, zd}, Array(Eigen::Map<const Array>(z_nodes.data(), z_nodes.size())));
    Tensor zp = g.constant({static_cast<int>(pairs.size()), zd},
                           Array(Eigen::Map<const Array>(z_pairs.data(), z_pairs.size())));
    return gpi_forward(g, params, zn, zp, pairs, mode);
  }
};

// Straightforward loop re-implementation of the aggregation, reading the same
// parameter values. Kept independent of the graph engine.
struct LoopOracle {
  const GpiFixture& f;

  static Eigen::VectorXd mlp(const MlpParams& m, Eigen::VectorXd x) {
    for (const MlpLayer& layer : m.layers) {
      ConstMatMap w(layer.weight->value.data(), layer.weight->shape[0], layer.weight->shape[1]);
      Eigen::Map<const Eigen::VectorXd> b(layer.bias->value.data(), layer.bias->size());
      x = (w.transpose() * x + b).eval();
      if (layer.act == Activation::kReLU) x = x.cwiseMax(0.0);
    }
    return x;
  }

  static Eigen::VectorXd softmax(const Eigen::VectorXd& s) {
    Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
  }

  // Returns (g, z'_nodes, z'_edges) with explicit loops.
  void run(GpiMode mode, Eigen::VectorXd& g_out, MatrixRM& nodes_out, MatrixRM& edges_out) const {
    int b = f.b, zd = f.zd, vd = f.params.value_dim, sd = f.params.summary_dim;
    MatrixRM s = MatrixRM::Zero(b, vd);
    MatrixRM phi_vals(static_cast<long>(f.pairs.size()), vd);
    Eigen::VectorXd phi_scores(static_cast<long>(f.pairs.size()));
    for (size_t p = 0; p < f.pairs.size(); ++p) {
      auto [i, j] = f.pairs[p];
      Eigen::VectorXd in(3 * zd);
      in << f.z_nodes.row(i).transpose(), f.z_pairs.row(static_cast<long>(p)).transpose(),
          f.z_nodes.row(j).transpose();
      Eigen::VectorXd out = mlp(f.params.phi, in);
      phi_vals.row(static_cast<long>(p)) = out.head(vd);
      phi_scores[static_cast<long>(p)] = out[vd];
    }
    for (int i = 0; i < b; ++i) {
      std::vector<long> rows;
      for (size_t p = 0; p < f.pairs.size(); ++p) {
        if (f.pairs[p].first == i) rows.push_back(static_cast<long>(p));
      }
      if (rows.empty()) continue;
      if (mode == GpiMode::kSum) {
        for (long r : rows) s.row(i) += phi_vals.row(r);
      } else {
        Eigen::VectorXd scores(static_cast<long>(rows.size()));
        for (size_t k = 0; k < rows.size(); ++k) scores[static_cast<long>(k)] = phi_scores[rows[k]];
        Eigen::VectorXd w = softmax(scores);
        for (size_t k = 0; k < rows.size(); ++k) s.row(i) += w[static_cast<long>(k)] * phi_vals.row(rows[k]);
      }
    }
    MatrixRM alpha_vals(b, sd);
    Eigen::VectorXd alpha_scores(b);
    for (int i = 0; i < b; ++i) {
      Eigen::VectorXd in(zd + vd);
      in << f.z_nodes.row(i).transpose(), s.row(i).transpose();
      Eigen::VectorXd out = mlp(f.params.alpha, in);
      alpha_vals.row(i) = out.head(sd);
      alpha_scores[i] = out[sd];
    }
    g_out = Eigen::VectorXd::Zero(sd);
    if (mode == GpiMode::kSum) {
      for (int i = 0; i < b; ++i) g_out += alpha_vals.row(i).transpose();
    } else {
      Eigen::VectorXd w = softmax(alpha_scores);
      for (int i = 0; i < b; ++i) g_out += w[i] * alpha_vals.row(i).transpose();
    }
    nodes_out = MatrixRM(b, f.params.rho_entity.output_width());
    for (int i = 0; i < b; ++i) {
      Eigen::VectorXd in(zd + sd);
      in << f.z_nodes.row(i).transpose(), g_out;
      nodes_out.row(i) = mlp(f.params.rho_entity, in).transpose();
    }
    edges_out = MatrixRM(static_cast<long>(f.pairs.size()), f.params.rho_relation.output_width());
    for (size_t p = 0; p < f.pairs.size(); ++p) {
      Eigen::VectorXd in(zd + sd);
      in << f.z_pairs.row(static_cast<long>(p)).transpose(), g_out;
      edges_out.row(static_cast<long>(p)) = mlp(f.params.rho_relation, in).transpose();
    }
  }
};

}  // namespace

TEST_CASE("gpi_forward matches an independent loop-level oracle") {
  for (GpiMode mode : {GpiMode::kSum, GpiMode::kAttention}) {
    GpiFixture f(3, 2, 4, 2, 99);
    Graph g;
    DsgOutput out = f.forward(g, mode);
    Eigen::VectorXd g_oracle;
    MatrixRM nodes_oracle, edges_oracle;
    LoopOracle{f}.run(mode, g_oracle, nodes_oracle, edges_oracle);
    for (int d = 0; d < 2; ++d) {
      CHECK(std::abs(out.g.values()[d] - g_oracle[d]) < 1e-12);
    }
    for (int i = 0; i < 3; ++i) {
      for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(out.nodes.values()[i * 2 + d] - nodes_oracle(i, d)) < 1e-12);
      }
    }
    for (int p = 0; p < 6; ++p) {
      for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(out.edges.values()[p * 2 + d] - edges_oracle(p, d)) < 1e-12);
      }
    }
  }
}

TEST_CASE("all-zero parameters with ReLU nets give a zero summary") {
  GpiFixture f(4, 3, 5, 3, 1);
  for (std::size_t i = 0; i < f.store.count(); ++i) f.store.at(i).value.setZero();
  Graph g;
  DsgOutput out = f.forward(g, GpiMode::kSum);
  for (long i = 0; i < out.g.values().size(); ++i) CHECK(out.g.values()[i] == 0.0);
}

TEST_CASE("permutation invariance of g and equivariance of node/edge outputs") {
  Rng perm_rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    int b = 1 + perm_rng.uniform_int(8);
    GpiMode mode = trial % 2 == 0 ? GpiMode::kSum : GpiMode::kAttention;
    GpiFixture f(b, 3, 6, 4, 1000 + static_cast<std::uint64_t>(trial));

    Graph g1;
    DsgOutput base = f.forward(g1, mode);

    // random permutation sigma: new index -> old index
    std::vector<int> sigma(b);
    std::iota(sigma.begin(), sigma.end(), 0);
    perm_rng.shuffle(sigma);

    // Same seed rebuilds identical parameters; only the inputs get permuted.
    GpiFixture fp(b, 3, 6, 4, 1000 + static_cast<std::uint64_t>(trial));
    for (int i = 0; i < b; ++i) fp.z_nodes.row(i) = f.z_nodes.row(sigma[i]);
    for (size_t p = 0; p < fp.pairs.size(); ++p) {
      auto [i, j] = fp.pairs[p];
      int oi = sigma[i], oj = sigma[j];
      long orig = 0;
      for (size_t q = 0; q < f.pairs.size(); ++q) {
        if (f.pairs[q] == std::make_pair(oi, oj)) orig = static_cast<long>(q);
      }
      fp.z_pairs.row(static_cast<long>(p)) = f.z_pairs.row(orig);
    }

    Graph g2;
    DsgOutput perm = fp.forward(g2, mode);

    for (long d = 0; d < base.g.values().size(); ++d) {
      CHECK(std::abs(base.g.values()[d] - perm.g.values()[d]) < 1e-9);
    }
    int od = f.params.rho_entity.output_width();
    for (int i = 0; i < b; ++i) {
      for (int d = 0; d < od; ++d) {
        CHECK(std::abs(perm.nodes.values()[i * od + d] - base.nodes.values()[sigma[i] * od + d]) <
              1e-9);
      }
    }
    if (b > 1) {
      for (size_t p = 0; p < fp.pairs.size(); ++p) {
        auto [i, j] = fp.pairs[p];
        long orig = 0;
        for (size_t q = 0; q < f.pairs.size(); ++q) {
          if (f.pairs[q] == std::make_pair(sigma[i], sigma[j])) orig = static_cast<long>(q);
        }
        for (int d = 0; d < od; ++d) {
          CHECK(std::abs(perm.edges.values()[static_cast<long>(p) * od + d] -
                         base.edges.values()[orig * od + d]) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("single node: empty neighborhood aggregates to zero in both modes") {
  for (GpiMode mode : {GpiMode::kSum, GpiMode::kAttention}) {
    GpiFixture f(1, 3, 5, 4, 7);
    Graph g;
    DsgOutput out = f.forward(g, mode);
    CHECK(out.nodes.shape()[0] == 1);
    CHECK_FALSE(out.has_edges);
    if (mode == GpiMode::kAttention) {
      REQUIRE(out.has_outer_weights);
      CHECK(out.outer_weights.values()[0] == 1.0);
    }
  }
}

TEST_CASE("sum mode is multiset-sensitive: duplicating a node changes g") {
  GpiFixture f(3, 3, 6, 4, 55);
  Graph g1;
  Array g_before = f.forward(g1, GpiMode::kSum).g.values();

  GpiFixture dup(4, 3, 6, 4, 55);  // same params (same seed), one more node
  dup.z_nodes.topRows(3) = f.z_nodes;
  dup.z_nodes.row(3) = f.z_nodes.row(2);
  for (size_t p = 0; p < dup.pairs.size(); ++p) {
    auto [i, j] = dup.pairs[p];
    auto src = [&](int k) { return k == 3 ? 2 : k; };
    int oi = src(i), oj = src(j);
    if (oi == oj) {
      // duplicated node pairs with its twin: reuse the self-like features
      for (int d = 0; d < dup.zd; ++d) {
        dup.z_pairs(static_cast<long>(p), d) = f.z_nodes(oi, d);
      }
      continue;
    }
    for (size_t q = 0; q < f.pairs.size(); ++q) {
      if (f.pairs[q] == std::make_pair(oi, oj)) {
        dup.z_pairs.row(static_cast<long>(p)) = f.z_pairs.row(static_cast<long>(q));
      }
    }
  }
  Graph g2;
  Array g_after = dup.forward(g2, GpiMode::kSum).g.values();
  double diff = 0.0;
  for (long d = 0; d < g_before.size(); ++d) diff += std::abs(g_before[d] - g_after[d]);
  CHECK(diff > 1e-6);
}

TEST_CASE("attention weights report") {
  SUBCASE("uniform inputs give equal weights") {
    GpiFixture f(5, 3, 6, 4, 2);
    for (int i = 1; i < 5; ++i) f.z_nodes.row(i) = f.z_nodes.row(0);
    f.z_pairs.setZero();
    for (size_t p = 0; p < f.pairs.size(); ++p) f.z_pairs.row(static_cast<long>(p)).setConstant(0.3);
    Graph g;
    Tensor zn = g.constant({5, 3}, Array(Eigen::Map<const Array>(f.z_nodes.data(), f.z_nodes.size())));
    Tensor zp = g.constant({20, 3}, Array(Eigen::Map<const Array>(f.z_pairs.data(), f.z_pairs.size())));
    std::vector<double> w =
        attention_weights_report(g, f.params, zn, zp, f.pairs, GpiMode::kAttention);
    for (double v : w) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("weights sum to one on random inputs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GpiFixture f(4, 3, 6, 4, 100 + seed);
      Graph g;
      Tensor zn = g.constant({4, 3}, Array(Eigen::Map<const Array>(f.z_nodes.data(), f.z_nodes.size())));
      Tensor zp = g.constant({12, 3}, Array(Eigen::Map<const Array>(f.z_pairs.data(), f.z_pairs.size())));
      std::vector<double> w =
          attention_weights_report(g, f.params, zn, zp, f.pairs, GpiMode::kAttention);
      double sum = 0.0;
      for (double v : w) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  SUBCASE("sum mode is an error") {
    GpiFixture f(3, 3, 6, 4, 5);
    Graph g;
    Tensor zn = g.constant({3, 3}, Array(Eigen::Map<const Array>(f.z_nodes.data(), f.z_nodes.size())));
    Tensor zp = g.constant({6, 3}, Array(Eigen::Map<const Array>(f.z_pairs.data(), f.z_pairs.size())));
    CHECK_THROWS_AS(attention_weights_report(g, f.params, zn, zp, f.pairs, GpiMode::kSum),
                    std::logic_error);
  }
}

TEST_CASE("gpi gradients match finite differences in both modes") {
  for (GpiMode mode : {GpiMode::kSum, GpiMode::kAttention}) {
    GpiFixture f(3, 2, 4, 3, 13);
    auto build = [&](Graph& g) {
      DsgOutput out = f.forward(g, mode);
      return add(reduce_sum(smooth_l1(out.nodes, g.zeros(out.nodes.shape()))),
                 add(reduce_sum(out.g), reduce_sum(exp(scalar_mul(out.edges, 0.3)))));
    };
    auto value = [&]() {
      Graph g;
      return build(g).scalar();
    };
    auto grads = [&]() {
      Graph g;
      Tensor loss = build(g);
      f.store.zero_grads();
      g.backward(loss);
    };
    CHECK(test::gradcheck(f.store, value, grads) < 1e-4);
  }
}
