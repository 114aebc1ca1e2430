#include "dsg/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsg {

QueryEmbeddingParams make_query_embedding(ParamStore& store, const std::string& prefix, int dim,
                                          Rng& rng) {
  QueryEmbeddingParams qe;
  qe.dim = dim;
  qe.entity_table = &store.create_uniform(prefix + ".entity_table", {kNumCategories, dim}, rng);
  qe.relation_table = &store.create_uniform(prefix + ".relation_table", {kNumRelations, dim}, rng);
  return qe;
}

Tensor query_vector(Graph& g, const QueryEmbeddingParams& qe, int subject_cat, int relation,
                    int object_cat) {
  Tensor ents = g.param(*qe.entity_table);
  Tensor rels = g.param(*qe.relation_table);
  return concat({gather_rows(ents, {subject_cat}), gather_rows(rels, {relation}),
                 gather_rows(ents, {object_cat})},
                1);
}

Tensor rr_logits(Graph& g, const MlpParams& rrc, Tensor node_feats, Tensor query_vec) {
  int b = node_feats.shape()[0];
  Tensor tiled = matmul(g.ones({b, 1}), query_vec);
  return mlp_forward(g, rrc, concat({node_feats, tiled}, 1));
}

SelectedBoxes select_boxes(const MatrixRM& logits) {
  SelectedBoxes out;
  int b = static_cast<int>(logits.rows());
  for (int i = 0; i < b; ++i) {
    int arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == kSubject) out.subjects.push_back(i);
    if (arg == kObject) out.objects.push_back(i);
  }
  auto fallback = [&](int role, std::vector<int>& set) {
    if (!set.empty()) return;
    int best = 0;
    logits.col(role).maxCoeff(&best);
    set.push_back(best);
  };
  fallback(kSubject, out.subjects);
  fallback(kObject, out.objects);
  return out;
}

RefinerParams make_refiner(ParamStore& store, const std::string& prefix, int feat_in, Rng& rng) {
  RefinerParams p;
  // The delta head starts near zero so refinement begins at the identity;
  // a full-scale init swings e^dw hard enough to throw boxes off canvas.
  p.weight = &store.create_uniform(prefix + ".weight", {4 + feat_in, 4}, rng);
  p.weight->value *= 0.01;
  p.bias = &store.create(prefix + ".bias", {4});
  return p;
}

Box apply_box_deltas(const Box& box, const std::array<double, 4>& deltas) {
  double ew = std::exp(deltas[2]);
  double eh = std::exp(deltas[3]);
  Box moved;
  moved.x = box.x + deltas[0] * box.w + box.w * 0.5 * (1.0 - ew);
  moved.y = box.y + deltas[1] * box.h + box.h * 0.5 * (1.0 - eh);
  moved.w = ew * box.w;
  moved.h = eh * box.h;
  Box clipped = clip_to_canvas(moved);
  if (clipped.w <= 0.0 || clipped.h <= 0.0) {
    throw std::runtime_error("apply_box_deltas: refined box has zero size after clipping");
  }
  return clipped;
}

// Box coordinates are centered and scaled inside the linear head; on raw
// [0,1] coordinates the optimal weights are large and the quadratic loss
// conditions the learning rate on the (tiny) feature variance.
constexpr double kRefinerBoxScale = 20.0;
constexpr double kRefinerBoxCenter[4] = {0.5, 0.5, 0.17, 0.17};

Tensor refine_boxes(Graph& g, const RefinerParams& refiner, Tensor node_feats, Tensor boxes) {
  int b = boxes.shape()[0];
  Tensor center = matmul(g.ones({b, 1}),
                         g.constant({1, 4}, std::vector<double>(kRefinerBoxCenter,
                                                                kRefinerBoxCenter + 4)));
  Tensor head_in = concat({scalar_mul(sub(boxes, center), kRefinerBoxScale), node_feats}, 1);
  Tensor deltas = add_rowvec(matmul(head_in, g.param(*refiner.weight)), g.param(*refiner.bias));
  Tensor x = slice_cols(boxes, 0, 1);
  Tensor y = slice_cols(boxes, 1, 2);
  Tensor w = slice_cols(boxes, 2, 3);
  Tensor h = slice_cols(boxes, 3, 4);
  Tensor ew = exp(slice_cols(deltas, 2, 3));
  Tensor eh = exp(slice_cols(deltas, 3, 4));
  // x' = x + dx*w + w*(1 - e^dw)/2 keeps zero deltas exact.
  Tensor nx = add(add(x, mul(slice_cols(deltas, 0, 1), w)),
                  mul(w, scalar_mul(scalar_add(scalar_mul(ew, -1.0), 1.0), 0.5)));
  Tensor ny = add(add(y, mul(slice_cols(deltas, 1, 2), h)),
                  mul(h, scalar_mul(scalar_add(scalar_mul(eh, -1.0), 1.0), 0.5)));
  Tensor nw = mul(ew, w);
  Tensor nh = mul(eh, h);
  // Trim overshoot from each side, differentiably: over = relu(...)
  Tensor over_l = relu(scalar_mul(nx, -1.0));
  Tensor over_r = relu(scalar_add(add(nx, nw), -1.0));
  Tensor over_t = relu(scalar_mul(ny, -1.0));
  Tensor over_b = relu(scalar_add(add(ny, nh), -1.0));
  Tensor cx = add(nx, over_l);
  Tensor cy = add(ny, over_t);
  Tensor cw = sub(sub(nw, over_l), over_r);
  Tensor ch = sub(sub(nh, over_t), over_b);
  Tensor out = concat({cx, cy, cw, ch}, 1);
  for (int i = 0; i < out.shape()[0]; ++i) {
    if (out.values()[i * 4 + 2] <= 0.0 || out.values()[i * 4 + 3] <= 0.0) {
      throw std::runtime_error("refine_boxes: refined box has zero size after clipping");
    }
  }
  return out;
}

LabelerParams make_labelers(ParamStore& store, const std::string& prefix, int node_in,
                            int edge_in, Rng& rng) {
  LabelerParams p;
  p.entity_weight = &store.create_uniform(prefix + ".entity_weight", {node_in, kNumCategories}, rng);
  p.entity_bias = &store.create(prefix + ".entity_bias", {kNumCategories});
  p.relation_weight =
      &store.create_uniform(prefix + ".relation_weight", {edge_in, kNumRelations}, rng);
  p.relation_bias = &store.create(prefix + ".relation_bias", {kNumRelations});
  return p;
}

Tensor entity_label_logits(Graph& g, const LabelerParams& p, Tensor node_feats) {
  return add_rowvec(matmul(node_feats, g.param(*p.entity_weight)), g.param(*p.entity_bias));
}

Tensor relation_label_logits(Graph& g, const LabelerParams& p, Tensor edge_feats) {
  return add_rowvec(matmul(edge_feats, g.param(*p.relation_weight)), g.param(*p.relation_bias));
}

namespace {

MatrixRM softmax_rows(const MatrixRM& logits) {
  MatrixRM probs(logits.rows(), logits.cols());
  for (long i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    probs.row(i) = e / e.sum();
  }
  return probs;
}

}  // namespace

DecodedSceneGraph decode_scene_graph(const MatrixRM& entity_logits, const MatrixRM& rel_logits,
                                     const std::vector<std::pair<int, int>>& pairs, int top_k) {
  DecodedSceneGraph sg;
  sg.pairs = pairs;
  sg.node_probs = softmax_rows(entity_logits);
  for (long i = 0; i < entity_logits.rows(); ++i) {
    int arg = 0;
    entity_logits.row(i).maxCoeff(&arg);
    sg.node_labels.push_back(arg);
  }
  if (!pairs.empty()) {
    sg.edge_probs = softmax_rows(rel_logits);
    std::vector<DecodedEdge> all;
    for (size_t p = 0; p < pairs.size(); ++p) {
      DecodedEdge e;
      e.i = pairs[p].first;
      e.j = pairs[p].second;
      int arg = 0;
      e.confidence = sg.edge_probs.row(static_cast<long>(p)).maxCoeff(&arg);
      e.relation = arg;
      all.push_back(e);
    }
    std::stable_sort(all.begin(), all.end(), [](const DecodedEdge& a, const DecodedEdge& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.i != b.i) return a.i < b.i;
      return a.j < b.j;
    });
    int k = std::min<int>(top_k, static_cast<int>(all.size()));
    sg.edges.assign(all.begin(), all.begin() + std::max(0, k));
  }
  return sg;
}

}  // namespace dsg
