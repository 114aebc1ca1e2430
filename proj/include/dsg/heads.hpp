#pragma once

#include "dsg/autodiff.hpp"
#include "dsg/geometry.hpp"
#include "dsg/nn.hpp"
#include "dsg/scene.hpp"

#include <array>
#include <utility>
#include <vector>

namespace dsg {

// Role logits are ordered (Subject, Object, Other, Background).
inline constexpr int kNumRoles = 4;
inline constexpr int kSubject = 0;
inline constexpr int kObject = 1;
inline constexpr int kOther = 2;
inline constexpr int kBackground = 3;

struct QueryEmbeddingParams {
  ParamTensor* entity_table = nullptr;    // [48, dim]
  ParamTensor* relation_table = nullptr;  // [4, dim]
  int dim = 0;
};

QueryEmbeddingParams make_query_embedding(ParamStore& store, const std::string& prefix, int dim,
                                          Rng& rng);

// concat(table[s], table[r], table[o]) -> [1, 3*dim]
Tensor query_vector(Graph& g, const QueryEmbeddingParams& qe, int subject_cat, int relation,
                    int object_cat);

// Per-proposal role logits: MLP over concat(node_feats_i, query_vec).
Tensor rr_logits(Graph& g, const MlpParams& rrc, Tensor node_feats, Tensor query_vec);

// Argmax selection with the evaluation fallback: an empty role set becomes
// the single box with the highest logit for that role.
struct SelectedBoxes {
  std::vector<int> subjects;
  std::vector<int> objects;
};
SelectedBoxes select_boxes(const MatrixRM& logits);

struct RefinerParams {
  ParamTensor* weight = nullptr;  // [4 + feat_in, 4] over (b_i, feats_i) -> (dx, dy, dw, dh)
  ParamTensor* bias = nullptr;    // [4]
};

RefinerParams make_refiner(ParamStore& store, const std::string& prefix, int feat_in, Rng& rng);

// Center-form delta correction, kept in corner form so zero deltas return the
// box bit-identically: x' = x + dx*w + w*(1 - e^dw)/2, w' = e^dw * w, then
// overshoot past the canvas is trimmed from each side.
Box apply_box_deltas(const Box& box, const std::array<double, 4>& deltas);

// Differentiable path over all proposals at once. boxes: [B, 4] constant.
Tensor refine_boxes(Graph& g, const RefinerParams& refiner, Tensor node_feats, Tensor boxes);

struct LabelerParams {
  ParamTensor* entity_weight = nullptr;    // [node_in, 48]
  ParamTensor* entity_bias = nullptr;      // [48]
  ParamTensor* relation_weight = nullptr;  // [edge_in, 4]
  ParamTensor* relation_bias = nullptr;    // [4]
};

LabelerParams make_labelers(ParamStore& store, const std::string& prefix, int node_in,
                            int edge_in, Rng& rng);

Tensor entity_label_logits(Graph& g, const LabelerParams& p, Tensor node_feats);
Tensor relation_label_logits(Graph& g, const LabelerParams& p, Tensor edge_feats);

struct DecodedEdge {
  int i = 0;
  int j = 0;
  int relation = 0;
  double confidence = 0.0;
};

// Scene graph read-out: argmax entity label per node plus the top_k most
// confident relation edges. Full softmax tables are kept for the two-step
// reasoner.
struct DecodedSceneGraph {
  std::vector<int> node_labels;
  MatrixRM node_probs;                      // [B, 48]
  std::vector<std::pair<int, int>> pairs;   // ordered (i, j), i-major
  MatrixRM edge_probs;                      // [P, 4]
  std::vector<DecodedEdge> edges;           // top_k by confidence
};

DecodedSceneGraph decode_scene_graph(const MatrixRM& entity_logits, const MatrixRM& rel_logits,
                                     const std::vector<std::pair<int, int>>& pairs, int top_k);

}  // namespace dsg
