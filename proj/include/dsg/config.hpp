#pragma once

#include "dsg/model.hpp"
#include "dsg/proposals.hpp"
#include "dsg/scene.hpp"
#include "dsg/training.hpp"

#include <cstdint>
#include <string>

namespace dsg {

// Flat key=value experiment configuration. Unknown keys are rejected; every
// run echoes its effective config into the output directory.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  SceneConfig scene;
  ProposalConfig proposals;
  ModelConfig model;
  TrainConfig train;
  int map_l = 14;
  double sg_iou_floor = 0.8;
  int decode_top_k = 8;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_text(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Applies one of {dsg, two-step, no-sgl, no-br, no-dsg}.
void apply_ablation(ExperimentConfig& cfg, const std::string& name);

}  // namespace dsg
