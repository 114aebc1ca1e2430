#pragma once

#include "dsg/geometry.hpp"
#include "dsg/heads.hpp"
#include "dsg/proposals.hpp"
#include "dsg/scene.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dsg {

inline constexpr int kDefaultMapL = 14;

// L x L boolean attention grid.
struct AttentionMap {
  int L = kDefaultMapL;
  std::vector<std::uint8_t> cells;  // row-major, L*L

  explicit AttentionMap(int l = kDefaultMapL) : L(l), cells(static_cast<size_t>(l) * l, 0) {}
  bool get(int r, int c) const { return cells[static_cast<size_t>(r) * L + c] != 0; }
  void set(int r, int c) { cells[static_cast<size_t>(r) * L + c] = 1; }
  int count() const;
  bool operator==(const AttentionMap& o) const { return L == o.L && cells == o.cells; }
};

// A cell is set iff its intersection area with any box is strictly positive.
AttentionMap boxes_to_map(const std::vector<Box>& boxes, int L);

// |a AND b| / |a OR b|; 1.0 when both maps are empty, 0.0 when exactly one is.
double map_iou(const AttentionMap& a, const AttentionMap& b);

struct QueryPrediction {
  std::vector<Box> subject_boxes;
  std::vector<Box> object_boxes;
};

using RrPredictor = std::function<QueryPrediction(const Scene&, int query_idx)>;

struct RrReport {
  double subject_iou = 0.0;
  double object_iou = 0.0;
  int n_queries = 0;
  std::vector<double> per_query_subject;
  std::vector<double> per_query_object;
};

// Attention-map IOU between ground-truth role boxes and predicted role boxes,
// averaged per query over the whole dataset.
RrReport evaluate_rr(const RrPredictor& predictor, const std::vector<Scene>& scenes, int L);

struct SgReport {
  double entity_acc = 0.0;
  double relation_acc = 0.0;
  long n_entities = 0;
  long n_relations = 0;
  bool entity_defined = false;
  bool relation_defined = false;
};

// Entity accuracy over proposals whose best ground-truth IOU clears the
// floor; relation accuracy over query-covered (subject, object) pairs whose
// matched proposals both clear it, against the covering query's relation.
SgReport evaluate_sg_decoding(
    const std::function<DecodedSceneGraph(const Scene&, const BoxSet&)>& decode,
    const std::vector<Scene>& scenes, const ProposalConfig& pcfg, std::uint64_t seed_base,
    double iou_floor);

}  // namespace dsg
