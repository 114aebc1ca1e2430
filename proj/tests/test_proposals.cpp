#include "dsg/proposals.hpp"

#include "dsg/model.hpp"
#include "dsg/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace dsg;

TEST_CASE("iou worked examples") {
  Box a{0, 0, 2, 2};
  Box b{1, 1, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{5, 5, 1, 1}) == 0.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(a, Box{0.5, 0.5, 0, 0}) == 0.0);  // degenerate
}

TEST_CASE("union box arithmetic") {
  Box a{0, 0, 0.1, 0.1};
  Box b{0.2, 0.2, 0.1, 0.1};
  Box u = union_box(a, b);
  CHECK(u.x == 0.0);
  CHECK(u.y == 0.0);
  CHECK(u.w == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(u.h == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("union and iou properties on random boxes") {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    auto rand_box = [&]() {
      Box b;
      b.w = rng.uniform(0.05, 0.5);
      b.h = rng.uniform(0.05, 0.5);
      b.x = rng.uniform(0.0, 1.0 - b.w);
      b.y = rng.uniform(0.0, 1.0 - b.h);
      return b;
    };
    Box a = rand_box(), b = rand_box();
    CHECK(union_box(a, b) == union_box(b, a));
    CHECK(union_box(a, a) == a);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
    CHECK(iou(a, union_box(a, b)) >= iou(a, b) - 1e-12);
  }
}

TEST_CASE("zero jitter reproduces the ground-truth boxes") {
  SceneConfig scfg;
  Scene s = generate_scene(3, scfg, 0);
  Image img = rasterize(s);
  ProposalConfig pcfg;
  pcfg.jitter = 0.0;
  BoxSet bs = propose(s, img, 11, pcfg);
  for (size_t i = 0; i < s.entities.size(); ++i) {
    CHECK(bs.boxes[i] == s.entities[i].box);
  }
  CHECK(bs.count() == static_cast<int>(s.entities.size()) + pcfg.n_background);
}

TEST_CASE("propose is deterministic in the seed") {
  SceneConfig scfg;
  Scene s = generate_scene(21, scfg, 0);
  Image img = rasterize(s);
  ProposalConfig pcfg;
  BoxSet a = propose(s, img, 5, pcfg);
  BoxSet b = propose(s, img, 5, pcfg);
  REQUIRE(a.count() == b.count());
  for (int i = 0; i < a.count(); ++i) CHECK(a.boxes[i] == b.boxes[i]);
  for (long i = 0; i < a.desc.size(); ++i) CHECK(a.desc.data()[i] == b.desc.data()[i]);
}

TEST_CASE("every ground-truth box keeps IOU >= 0.5 with its jittered proposal") {
  SceneConfig scfg;
  ProposalConfig pcfg;
  double min_iou = 1.0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    Scene s = generate_scene(seed, scfg, static_cast<int>(seed));
    Image img = rasterize(s);
    BoxSet bs = propose(s, img, seed * 31 + 7, pcfg);
    for (size_t e = 0; e < s.entities.size(); ++e) {
      double best = 0.0;
      for (int i = 0; i < bs.count(); ++i) best = std::max(best, iou(bs.boxes[i], s.entities[e].box));
      min_iou = std::min(min_iou, best);
    }
  }
  MESSAGE("min best-IOU over all ground-truth boxes: ", min_iou);
  CHECK(min_iou >= 0.5);
}

TEST_CASE("background boxes stay below the rejection overlap") {
  SceneConfig scfg;
  ProposalConfig pcfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Scene s = generate_scene(seed, scfg, 0);
    Image img = rasterize(s);
    BoxSet bs = propose(s, img, seed, pcfg);
    for (int i = static_cast<int>(s.entities.size()); i < bs.count(); ++i) {
      for (const Entity& e : s.entities) {
        CHECK(iou(bs.boxes[i], e.box) <= pcfg.bg_iou_reject + 1e-12);
      }
    }
  }
}

TEST_CASE("pair layout is i-major over ordered pairs") {
  SceneConfig scfg;
  Scene s = generate_scene(2, scfg, 0);
  Image img = rasterize(s);
  BoxSet bs = propose(s, img, 1, ProposalConfig{});
  int b = bs.count();
  REQUIRE(bs.pair_count() == b * (b - 1));
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      if (i == j) continue;
      CHECK(bs.pairs[bs.pair_index(i, j)] == std::make_pair(i, j));
      CHECK(bs.union_boxes[bs.pair_index(i, j)] == union_box(bs.boxes[i], bs.boxes[j]));
    }
  }
}

TEST_CASE("descriptor: solid red crop puts the red mass in one bin") {
  Scene s;
  s.canvas_px = 32;
  Entity e;
  e.id = 0;
  e.shape = 0;
  e.color = 1;  // red (173, 35, 35)
  e.size = 1;
  e.box = Box{0.25, 0.25, 0.5, 0.5};
  e.depth = 1.0;  // full brightness
  s.entities.push_back(e);
  Image img = rasterize(s);
  auto d = describe(img, e.box);
  // red value 173 -> bin 5 of the red channel
  CHECK(d[5] == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int b = 0; b < 8; ++b) sum += d[c * 8 + b];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(d[24] == e.box.x);
  CHECK(d[26] == e.box.w);
  CHECK(d[28] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("descriptor purity and the outside-canvas error") {
  SceneConfig scfg;
  Scene s = generate_scene(9, scfg, 0);
  Image img = rasterize(s);
  Box b = s.entities[0].box;
  auto d1 = describe(img, b);
  auto d2 = describe(img, b);
  for (int i = 0; i < kDescriptorDim; ++i) CHECK(d1[i] == d2[i]);
  CHECK_THROWS_AS(describe(img, Box{2.0, 2.0, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("luminance falls as depth pushes an entity behind") {
  auto lum_at = [](double depth) {
    Scene s;
    s.canvas_px = 64;
    Entity e;
    e.id = 0;
    e.shape = 0;
    e.color = 6;  // cyan
    e.size = 1;
    e.box = Box{0.3, 0.3, 0.22, 0.22};
    e.depth = depth;
    s.entities.push_back(e);
    Image img = rasterize(s);
    return describe(img, e.box)[29];
  };
  double near = lum_at(0.95);
  double mid = lum_at(0.5);
  double far = lum_at(0.05);
  CHECK(near > mid);
  CHECK(mid > far);
}

TEST_CASE("gradients flow into the embedding MLP through the full model") {
  SceneConfig scfg;
  ProposalConfig pcfg;
  ScenePack pack = pack_scene(generate_scene(17, scfg, 0), pcfg, 99);
  ModelConfig mcfg;
  mcfg.feat_dim = 16;
  mcfg.embed_hidden = 16;
  mcfg.gpi_hidden = 16;
  mcfg.value_dim = 16;
  mcfg.summary_dim = 16;
  mcfg.zprime_dim = 16;
  mcfg.rrc_hidden = 16;
  ParamStore store;
  Rng rng(1);
  ModelParams params = build_model(store, mcfg, rng);
  Graph g;
  LossBreakdown parts;
  Tensor loss = total_loss(g, params, mcfg, pack, LossWeights{}, &parts);
  store.zero_grads();
  g.backward(loss);
  double norm = 0.0;
  for (const MlpLayer& layer : params.embed.layers) {
    norm += layer.weight->grad.abs().sum();
  }
  CHECK(norm > 0.0);
}
