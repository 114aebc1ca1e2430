#include "dsg/eval.hpp"

#include "dsg/heads.hpp"
#include "dsg/raster.hpp"

#include <stdexcept>

namespace dsg {

int AttentionMap::count() const {
  int n = 0;
  for (std::uint8_t c : cells) n += c != 0;
  return n;
}

AttentionMap boxes_to_map(const std::vector<Box>& boxes, int L) {
  AttentionMap map(L);
  for (const Box& b : boxes) {
    for (int r = 0; r < L; ++r) {
      double cy0 = static_cast<double>(r) / L;
      double cy1 = static_cast<double>(r + 1) / L;
      double ih = std::min(b.y2(), cy1) - std::max(b.y, cy0);
      if (ih <= 0.0) continue;
      for (int c = 0; c < L; ++c) {
        double cx0 = static_cast<double>(c) / L;
        double cx1 = static_cast<double>(c + 1) / L;
        double iw = std::min(b.x2(), cx1) - std::max(b.x, cx0);
        if (iw > 0.0) map.set(r, c);
      }
    }
  }
  return map;
}

double map_iou(const AttentionMap& a, const AttentionMap& b) {
  if (a.L != b.L) throw std::invalid_argument("map_iou: grid sizes differ");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.cells.size(); ++i) {
    bool av = a.cells[i] != 0, bv = b.cells[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

RrReport evaluate_rr(const RrPredictor& predictor, const std::vector<Scene>& scenes, int L) {
  if (scenes.empty()) throw std::invalid_argument("evaluate_rr: empty dataset");
  RrReport rep;
  for (const Scene& scene : scenes) {
    for (size_t q = 0; q < scene.queries.size(); ++q) {
      const Query& query = scene.queries[q];
      std::vector<Box> gt_subj, gt_obj;
      for (int id : query.gt_subject_ids) gt_subj.push_back(scene.entities[id].box);
      for (int id : query.gt_object_ids) gt_obj.push_back(scene.entities[id].box);
      QueryPrediction pred = predictor(scene, static_cast<int>(q));
      double si = map_iou(boxes_to_map(gt_subj, L), boxes_to_map(pred.subject_boxes, L));
      double oi = map_iou(boxes_to_map(gt_obj, L), boxes_to_map(pred.object_boxes, L));
      rep.per_query_subject.push_back(si);
      rep.per_query_object.push_back(oi);
      ++rep.n_queries;
    }
  }
  if (rep.n_queries == 0) throw std::invalid_argument("evaluate_rr: dataset has no queries");
  double ssum = 0.0, osum = 0.0;
  for (double v : rep.per_query_subject) ssum += v;
  for (double v : rep.per_query_object) osum += v;
  rep.subject_iou = ssum / rep.n_queries;
  rep.object_iou = osum / rep.n_queries;
  return rep;
}

SgReport evaluate_sg_decoding(
    const std::function<DecodedSceneGraph(const Scene&, const BoxSet&)>& decode,
    const std::vector<Scene>& scenes, const ProposalConfig& pcfg, std::uint64_t seed_base,
    double iou_floor) {
  SgReport rep;
  long ent_hits = 0, rel_hits = 0;
  for (const Scene& scene : scenes) {
    Image img = rasterize(scene);
    BoxSet boxset = propose(scene, img, seed_base + static_cast<std::uint64_t>(scene.scene_id),
                            pcfg);
    DecodedSceneGraph sg = decode(scene, boxset);

    // Best proposal per entity and best entity per proposal.
    int b = boxset.count();
    int n = static_cast<int>(scene.entities.size());
    std::vector<int> best_prop(n, -1);
    std::vector<double> best_prop_iou(n, -1.0);
    for (int e = 0; e < n; ++e) {
      for (int i = 0; i < b; ++i) {
        double v = iou(boxset.boxes[i], scene.entities[e].box);
        if (v > best_prop_iou[e]) {
          best_prop_iou[e] = v;
          best_prop[e] = i;
        }
      }
    }
    for (int i = 0; i < b; ++i) {
      double best = -1.0;
      int best_e = -1;
      for (int e = 0; e < n; ++e) {
        double v = iou(boxset.boxes[i], scene.entities[e].box);
        if (v > best) {
          best = v;
          best_e = e;
        }
      }
      if (best_e >= 0 && best >= iou_floor) {
        ++rep.n_entities;
        if (sg.node_labels[i] == scene.entities[best_e].category()) ++ent_hits;
      }
    }

    for (const Query& q : scene.queries) {
      for (int sid : q.gt_subject_ids) {
        for (int oid : q.gt_object_ids) {
          if (sid == oid) continue;
          if (!relation_holds(scene.entities[sid], scene.entities[oid], q.relation)) continue;
          int pi = best_prop[sid], pj = best_prop[oid];
          if (pi < 0 || pj < 0 || pi == pj) continue;
          if (best_prop_iou[sid] < iou_floor || best_prop_iou[oid] < iou_floor) continue;
          int row = boxset.pair_index(pi, pj);
          int arg = 0;
          sg.edge_probs.row(row).maxCoeff(&arg);
          ++rep.n_relations;
          if (arg == q.relation) ++rel_hits;
        }
      }
    }
  }
  rep.entity_defined = rep.n_entities > 0;
  rep.relation_defined = rep.n_relations > 0;
  if (rep.entity_defined) rep.entity_acc = static_cast<double>(ent_hits) / rep.n_entities;
  if (rep.relation_defined) rep.relation_acc = static_cast<double>(rel_hits) / rep.n_relations;
  return rep;
}

}  // namespace dsg
