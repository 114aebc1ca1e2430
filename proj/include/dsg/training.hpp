#pragma once

#include "dsg/eval.hpp"
#include "dsg/model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dsg {

// Per-proposal ground-truth role. The first four match the logit order;
// Ignore marks the [0.3, 0.5) overlap band that is excluded from the RR loss.
enum class Role : int {
  kSubject = 0,
  kObject = 1,
  kOther = 2,
  kBackground = 3,
  kIgnore = 4,
};

// Rule table from the max-overlap ground-truth entity, with thresholds
// 0.5 / 0.3 and a force-assign of each role box's best proposal (subjects
// first, ids ascending, ties to the lowest proposal index).
std::vector<Role> assign_roles(const std::vector<Box>& proposals, const Scene& scene,
                               int query_idx);

struct LossWeights {
  double w_rr = 0.2;
  double w_box = 1.0;
  double w_sgl = 0.01;
  double w_det = 1.0;  // detector loss slot; unused with the simulated detector
};

struct TrainConfig {
  int epochs = 6;
  double lr = 0.01;
  double momentum = 0.9;
  double lr_decay = 0.5;
  int decay_period = 2;
  std::uint64_t seed = 0;
  LossWeights weights;
};

// Everything about one scene that training needs and that does not depend on
// the parameters: proposals, role targets, refiner matches, labeling targets.
struct ScenePack {
  Scene scene;
  BoxSet boxset;
  std::vector<std::vector<Role>> roles;  // per query, per proposal
  std::vector<int> box_match;            // matched entity (max IOU >= 0.5) or -1
  std::vector<std::vector<std::pair<int, int>>> sgl_entity_rows;    // (proposal, category)
  std::vector<std::vector<std::pair<int, int>>> sgl_relation_rows;  // (pair row, relation)
};

ScenePack pack_scene(const Scene& scene, const ProposalConfig& pcfg, std::uint64_t proposal_seed);

struct LossBreakdown {
  double rr = 0.0;
  double box = 0.0;
  double sgl = 0.0;
  double total = 0.0;
};

// Weighted multi-task loss over all queries of one scene (the batch unit).
// Ablation flags in the model config zero out omitted terms.
Tensor total_loss(Graph& g, const ModelParams& params, const ModelConfig& cfg,
                  const ScenePack& pack, const LossWeights& weights, LossBreakdown* breakdown);

struct EpochMetrics {
  int epoch = 0;
  double loss_rr = 0.0;
  double loss_box = 0.0;
  double loss_sgl = 0.0;
  double val_subj_iou = 0.0;
  double val_obj_iou = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
};

// One SGD step per scene, scenes in scene_id order, lr halved every
// decay_period epochs. Deterministic in (data, seed). Aborts on divergence
// (any non-finite loss throws).
TrainResult train(const std::vector<ScenePack>& train_packs,
                  const std::vector<ScenePack>& val_packs, ParamStore& store,
                  ModelParams& params, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  int map_L);

// Two-step reasoning over a decoded scene graph: return the nodes of exact
// query-triplet matches, otherwise the ordered pair maximizing
// P(s|i) * P(r|i,j) * P(o|j) with lexicographic tie-break.
SelectedBoxes two_step_reason(const DecodedSceneGraph& sg, const Query& query);

}  // namespace dsg
