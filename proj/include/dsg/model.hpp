#pragma once

#include "dsg/dsggen.hpp"
#include "dsg/heads.hpp"
#include "dsg/proposals.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsg {

struct AblationFlags {
  bool use_dsg = true;
  bool use_box_refiner = true;
  bool use_sgl_loss = true;
  bool two_step = false;
};

struct ModelConfig {
  int feat_dim = 64;
  int embed_hidden = 64;
  int gpi_hidden = 64;
  int value_dim = 64;
  int summary_dim = 64;
  int zprime_dim = 64;
  int rrc_hidden = 64;
  int query_embed_dim = 16;
  GpiMode mode = GpiMode::kAttention;
  AblationFlags flags;

  int z_dim() const { return feat_dim + 4; }
  // Width of the features the heads consume: z' with the DSG, z without it.
  int head_dim() const { return flags.use_dsg ? zprime_dim : z_dim(); }
};

struct ModelParams {
  MlpParams embed;  // shared by box and union descriptors
  GpiParams gpi;
  QueryEmbeddingParams query_embed;
  MlpParams rrc;
  RefinerParams refiner;
  LabelerParams labelers;
};

// Creates every parameter tensor (GPI included even for no-DSG runs, where it
// simply receives zero gradients). Creation order fixes the checkpoint layout.
ModelParams build_model(ParamStore& store, const ModelConfig& config, Rng& rng);

struct SceneForward {
  Tensor boxes;       // [B, 4] constant
  Tensor z_nodes;     // [B, z_dim]
  Tensor z_edges;     // [P, z_dim]
  Tensor node_feats;  // [B, head_dim]
  Tensor edge_feats;  // [P, head_dim]
  DsgOutput dsg;
  bool has_dsg = false;
  Tensor refined;     // [B, 4] when the refiner is enabled
  bool has_refined = false;
};

SceneForward model_forward(Graph& g, const ModelParams& params, const ModelConfig& config,
                           const BoxSet& boxset);

// Post-forward values needed by evaluation, one scene at a time.
struct SceneEval {
  std::vector<Box> boxes;      // proposals
  std::vector<Box> out_boxes;  // refined when the refiner is on, else proposals
  std::vector<MatrixRM> query_role_logits;  // per scene query, [B, 4]
  MatrixRM entity_logits;                   // [B, 48]
  MatrixRM relation_logits;                 // [P, 4]
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> outer_weights;  // attention mode only
};

SceneEval evaluate_scene(const ModelParams& params, const ModelConfig& config, const Scene& scene,
                         const BoxSet& boxset);

}  // namespace dsg
