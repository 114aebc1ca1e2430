#pragma once

#include "dsg/config.hpp"
#include "dsg/training.hpp"

#include <string>
#include <vector>

namespace dsg {

// Worker count from DSG_THREADS; defaults to 1 for fully deterministic runs.
int env_threads();

std::vector<Scene> load_split(const std::string& data_dir, const std::string& split);

// Proposal + target precomputation, parallel across scenes (each scene uses
// seed + scene_id), results in scene order regardless of thread count.
std::vector<ScenePack> make_packs(const std::vector<Scene>& scenes, const ProposalConfig& pcfg,
                                  std::uint64_t seed, int threads);

// Role-prediction closure over packed scenes (two-step inference when the
// config says so). Scenes must be evaluated in pack order.
RrPredictor make_rr_predictor(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<ScenePack>& packs);

// gen: train/val/test JSON-lines splits plus PPM renders and a config echo.
void run_gen(const ExperimentConfig& cfg, const std::string& out_dir);

// train: checkpoint (model.ckpt), metrics log (metrics.jsonl), config echo.
TrainResult run_train(const ExperimentConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir);

struct EvalResult {
  double subject_iou = 0.0;
  double object_iou = 0.0;
  int n_queries = 0;
  SgReport sg;
  std::vector<double> per_query_subject;
  std::vector<double> per_query_object;
  std::string json;  // the report as printed by the CLI
};

// eval: reads the model directory's config echo and checkpoint, evaluates a
// split, optionally writes attention-map and box-overlay renders.
EvalResult run_eval(const std::string& model_dir, const std::string& data_dir,
                    const std::string& split, const std::string& render_dir);

struct AblateRow {
  std::string name;
  double subject_iou = 0.0;
  double subject_se = 0.0;
  double object_iou = 0.0;
  double object_se = 0.0;
};

// ablate: trains and evaluates the five model variants with a shared seed and
// writes ablation.json plus an aligned text table.
std::vector<AblateRow> run_ablate(const ExperimentConfig& cfg, const std::string& data_dir,
                                  const std::string& out_dir);

}  // namespace dsg
