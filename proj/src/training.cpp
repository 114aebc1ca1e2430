#include "dsg/training.hpp"

#include "dsg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace dsg {

std::vector<Role> assign_roles(const std::vector<Box>& proposals, const Scene& scene,
                               int query_idx) {
  if (query_idx < 0 || query_idx >= static_cast<int>(scene.queries.size())) {
    throw std::invalid_argument("assign_roles: query index out of range");
  }
  const Query& query = scene.queries[query_idx];
  if (query.gt_subject_ids.empty() || query.gt_object_ids.empty()) {
    throw std::invalid_argument("assign_roles: query has empty ground-truth lists");
  }
  int n = static_cast<int>(scene.entities.size());
  int b = static_cast<int>(proposals.size());

  std::set<int> subj(query.gt_subject_ids.begin(), query.gt_subject_ids.end());
  std::set<int> obj(query.gt_object_ids.begin(), query.gt_object_ids.end());
  // Entities named by any other query of this scene.
  std::set<int> other_gt;
  for (size_t q = 0; q < scene.queries.size(); ++q) {
    if (static_cast<int>(q) == query_idx) continue;
    other_gt.insert(scene.queries[q].gt_subject_ids.begin(),
                    scene.queries[q].gt_subject_ids.end());
    other_gt.insert(scene.queries[q].gt_object_ids.begin(),
                    scene.queries[q].gt_object_ids.end());
  }

  std::vector<Role> roles(b, Role::kBackground);
  for (int i = 0; i < b; ++i) {
    int best_e = 0;
    double best = -1.0;
    for (int e = 0; e < n; ++e) {
      double v = iou(proposals[i], scene.entities[e].box);
      if (v > best) {  // ties keep the lowest entity index
        best = v;
        best_e = e;
      }
    }
    if (subj.count(best_e) && best >= 0.5) {
      roles[i] = Role::kSubject;
    } else if (obj.count(best_e) && best >= 0.5) {
      roles[i] = Role::kObject;
    } else {
      bool other = false;
      for (int e : other_gt) {
        if (iou(proposals[i], scene.entities[e].box) > 0.5) {
          other = true;
          break;
        }
      }
      if (other) {
        roles[i] = Role::kOther;
      } else if (best < 0.3) {
        roles[i] = Role::kBackground;
      } else {
        roles[i] = Role::kIgnore;
      }
    }
  }

  // Force-assign: every ground-truth role box gets its best proposal, so each
  // role always has a positive. Subjects first, ids ascending.
  auto force = [&](const std::vector<int>& ids, Role role) {
    std::vector<int> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    for (int e : sorted) {
      int best_p = 0;
      double best = -1.0;
      for (int i = 0; i < b; ++i) {
        double v = iou(proposals[i], scene.entities[e].box);
        if (v > best) {  // ties keep the lowest proposal index
          best = v;
          best_p = i;
        }
      }
      roles[best_p] = role;
    }
  };
  force(query.gt_subject_ids, Role::kSubject);
  force(query.gt_object_ids, Role::kObject);
  return roles;
}

ScenePack pack_scene(const Scene& scene, const ProposalConfig& pcfg, std::uint64_t proposal_seed) {
  ScenePack pack;
  pack.scene = scene;
  Image img = rasterize(scene);
  pack.boxset = propose(scene, img, proposal_seed, pcfg);

  int b = pack.boxset.count();
  int n = static_cast<int>(scene.entities.size());
  for (size_t q = 0; q < scene.queries.size(); ++q) {
    pack.roles.push_back(assign_roles(pack.boxset.boxes, scene, static_cast<int>(q)));
  }

  // Refiner supervision: every proposal whose max-IOU entity clears 0.5.
  std::vector<int> best_entity(b, -1);
  std::vector<double> best_iou(b, -1.0);
  for (int i = 0; i < b; ++i) {
    for (int e = 0; e < n; ++e) {
      double v = iou(pack.boxset.boxes[i], scene.entities[e].box);
      if (v > best_iou[i]) {
        best_iou[i] = v;
        best_entity[i] = e;
      }
    }
    pack.box_match.push_back(best_iou[i] >= 0.5 ? best_entity[i] : -1);
  }

  // Scene-graph labeling targets: per query, the best proposal of each
  // ground-truth role entity, and the edge of every satisfying (s, o) pair.
  std::vector<int> best_prop(n, -1);
  {
    std::vector<double> best(n, -1.0);
    for (int e = 0; e < n; ++e) {
      for (int i = 0; i < b; ++i) {
        double v = iou(pack.boxset.boxes[i], scene.entities[e].box);
        if (v > best[e]) {
          best[e] = v;
          best_prop[e] = i;
        }
      }
    }
  }
  for (const Query& q : scene.queries) {
    std::vector<std::pair<int, int>> ent_rows;
    std::vector<std::pair<int, int>> rel_rows;
    for (int sid : q.gt_subject_ids) {
      ent_rows.emplace_back(best_prop[sid], scene.entities[sid].category());
    }
    for (int oid : q.gt_object_ids) {
      ent_rows.emplace_back(best_prop[oid], scene.entities[oid].category());
    }
    for (int sid : q.gt_subject_ids) {
      for (int oid : q.gt_object_ids) {
        if (sid == oid) continue;
        if (!relation_holds(scene.entities[sid], scene.entities[oid], q.relation)) continue;
        int pi = best_prop[sid], pj = best_prop[oid];
        if (pi == pj) continue;
        rel_rows.emplace_back(pack.boxset.pair_index(pi, pj), q.relation);
      }
    }
    pack.sgl_entity_rows.push_back(std::move(ent_rows));
    pack.sgl_relation_rows.push_back(std::move(rel_rows));
  }
  return pack;
}

namespace {

MatrixRM gt_box_matrix(const Scene& scene, const std::vector<int>& entity_ids) {
  MatrixRM m(static_cast<long>(entity_ids.size()), 4);
  for (size_t k = 0; k < entity_ids.size(); ++k) {
    const Box& gt = scene.entities[entity_ids[k]].box;
    m(static_cast<long>(k), 0) = gt.x;
    m(static_cast<long>(k), 1) = gt.y;
    m(static_cast<long>(k), 2) = gt.w;
    m(static_cast<long>(k), 3) = gt.h;
  }
  return m;
}

}  // namespace

Tensor total_loss(Graph& g, const ModelParams& params, const ModelConfig& cfg,
                  const ScenePack& pack, const LossWeights& weights, LossBreakdown* breakdown) {
  if (pack.scene.queries.empty()) throw std::invalid_argument("total_loss: batch has no queries");
  SceneForward fwd = model_forward(g, params, cfg, pack.boxset);

  // Referring-relationship classification: per query, the sum of cross
  // entropies over its proposals (Ignore band excluded), averaged over the
  // queries batched for this image.
  std::vector<Tensor> rr_terms;
  for (size_t q = 0; q < pack.scene.queries.size(); ++q) {
    const Query& query = pack.scene.queries[q];
    Tensor qv = query_vector(g, params.query_embed, query.subject_cat, query.relation,
                             query.object_cat);
    Tensor logits = rr_logits(g, params.rrc, fwd.node_feats, qv);
    std::vector<int> keep;
    std::vector<int> targets;
    for (int i = 0; i < pack.boxset.count(); ++i) {
      if (pack.roles[q][i] == Role::kIgnore) continue;
      keep.push_back(i);
      targets.push_back(static_cast<int>(pack.roles[q][i]));
    }
    if (keep.empty()) continue;
    Tensor ce = softmax_cross_entropy(gather_rows(logits, keep), targets);
    rr_terms.push_back(scalar_mul(ce, static_cast<double>(keep.size())));
  }
  Tensor loss_rr = g.scalar(0.0);
  for (const Tensor& t : rr_terms) loss_rr = add(loss_rr, t);
  if (!rr_terms.empty()) {
    loss_rr = scalar_mul(loss_rr, 1.0 / static_cast<double>(rr_terms.size()));
  }

  // Box refinement against each supervised proposal's matched entity box.
  Tensor loss_box = g.scalar(0.0);
  if (cfg.flags.use_box_refiner) {
    std::vector<int> rows;
    std::vector<int> matched;
    for (int i = 0; i < pack.boxset.count(); ++i) {
      if (pack.box_match[i] >= 0) {
        rows.push_back(i);
        matched.push_back(pack.box_match[i]);
      }
    }
    if (!rows.empty()) {
      MatrixRM gt = gt_box_matrix(pack.scene, matched);
      Array flat = Eigen::Map<const Array>(gt.data(), gt.size());
      Tensor target = g.constant({static_cast<int>(rows.size()), 4}, std::move(flat));
      // Summed over boxes and coordinates.
      loss_box = scalar_mul(smooth_l1(gather_rows(fwd.refined, rows), target),
                            4.0 * static_cast<double>(rows.size()));
    }
  }

  // Scene-graph labeling: cross entropies summed over every query's
  // subject/object/relation triplet matches.
  Tensor loss_sgl = g.scalar(0.0);
  if (cfg.flags.use_sgl_loss) {
    std::vector<int> ent_rows, ent_targets, rel_rows, rel_targets;
    for (size_t q = 0; q < pack.scene.queries.size(); ++q) {
      for (auto [row, cat] : pack.sgl_entity_rows[q]) {
        ent_rows.push_back(row);
        ent_targets.push_back(cat);
      }
      for (auto [row, rel] : pack.sgl_relation_rows[q]) {
        rel_rows.push_back(row);
        rel_targets.push_back(rel);
      }
    }
    std::vector<Tensor> terms;
    if (!ent_rows.empty()) {
      Tensor logits = entity_label_logits(g, params.labelers, fwd.node_feats);
      Tensor ce = softmax_cross_entropy(gather_rows(logits, ent_rows), ent_targets);
      terms.push_back(scalar_mul(ce, static_cast<double>(ent_targets.size())));
    }
    if (!rel_rows.empty() && pack.boxset.pair_count() > 0) {
      Tensor logits = relation_label_logits(g, params.labelers, fwd.edge_feats);
      Tensor ce = softmax_cross_entropy(gather_rows(logits, rel_rows), rel_targets);
      terms.push_back(scalar_mul(ce, static_cast<double>(rel_targets.size())));
    }
    for (const Tensor& t : terms) loss_sgl = add(loss_sgl, t);
  }

  if (breakdown) {
    breakdown->rr = loss_rr.scalar();
    breakdown->box = loss_box.scalar();
    breakdown->sgl = loss_sgl.scalar();
  }
  Tensor total = add(add(scalar_mul(loss_rr, weights.w_rr), scalar_mul(loss_box, weights.w_box)),
                     scalar_mul(loss_sgl, weights.w_sgl));
  if (breakdown) breakdown->total = total.scalar();
  return total;
}

namespace {

QueryPrediction predict_from_eval(const SceneEval& ev, const Scene& scene, int query_idx,
                                  bool two_step) {
  QueryPrediction pred;
  if (two_step) {
    DecodedSceneGraph sg =
        decode_scene_graph(ev.entity_logits, ev.relation_logits, ev.pairs, 0);
    SelectedBoxes sel = two_step_reason(sg, scene.queries[query_idx]);
    for (int i : sel.subjects) pred.subject_boxes.push_back(ev.out_boxes[i]);
    for (int j : sel.objects) pred.object_boxes.push_back(ev.out_boxes[j]);
  } else {
    SelectedBoxes sel = select_boxes(ev.query_role_logits[query_idx]);
    for (int i : sel.subjects) pred.subject_boxes.push_back(ev.out_boxes[i]);
    for (int j : sel.objects) pred.object_boxes.push_back(ev.out_boxes[j]);
  }
  return pred;
}

}  // namespace

TrainResult train(const std::vector<ScenePack>& train_packs,
                  const std::vector<ScenePack>& val_packs, ParamStore& store,
                  ModelParams& params, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  int map_L) {
  if (train_packs.empty()) throw std::invalid_argument("train: empty dataset");
  if (tcfg.decay_period < 1) throw std::invalid_argument("train: decay_period must be >= 1");

  // Scene order is fixed by scene_id.
  std::vector<const ScenePack*> order;
  for (const ScenePack& p : train_packs) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const ScenePack* a, const ScenePack* b) {
    return a->scene.scene_id < b->scene.scene_id;
  });

  TrainResult result;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double lr = tcfg.lr;
    for (int k = 0; k < epoch / tcfg.decay_period; ++k) lr *= tcfg.lr_decay;

    double sum_rr = 0.0, sum_box = 0.0, sum_sgl = 0.0;
    int step = 0;
    for (const ScenePack* pack : order) {
      Graph g;
      LossBreakdown parts;
      if (std::getenv("DSG_DEBUG") && step % 100 == 0) {
        fprintf(stderr, "[debug] epoch %d step %d\n", epoch, step);
      }
      ++step;
      Tensor loss = total_loss(g, params, mcfg, *pack, tcfg.weights, &parts);
      if (std::getenv("DSG_DEBUG") && step % 100 == 1) {
        fprintf(stderr, "[debug]   rr %.4f box %.6f sgl %.4f\n", parts.rr, parts.box, parts.sgl);
      }
      if (!std::isfinite(parts.total)) {
        throw std::runtime_error("train: loss diverged (non-finite)");
      }
      store.zero_grads();
      g.backward(loss);
      sgd_step(store, lr, tcfg.momentum);
      sum_rr += parts.rr;
      sum_box += parts.box;
      sum_sgl += parts.sgl;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss_rr = sum_rr / static_cast<double>(order.size());
    m.loss_box = sum_box / static_cast<double>(order.size());
    m.loss_sgl = sum_sgl / static_cast<double>(order.size());
    m.lr = lr;

    if (!val_packs.empty()) {
      std::vector<Scene> val_scenes;
      for (const ScenePack& p : val_packs) val_scenes.push_back(p.scene);
      const ScenePack* current = nullptr;
      SceneEval ev;
      RrPredictor predictor = [&](const Scene& scene, int query_idx) {
        const ScenePack* pack = nullptr;
        for (const ScenePack& p : val_packs) {
          if (p.scene.scene_id == scene.scene_id) {
            pack = &p;
            break;
          }
        }
        if (pack != current) {
          ev = evaluate_scene(params, mcfg, pack->scene, pack->boxset);
          current = pack;
        }
        return predict_from_eval(ev, scene, query_idx, mcfg.flags.two_step);
      };
      RrReport rep = evaluate_rr(predictor, val_scenes, map_L);
      m.val_subj_iou = rep.subject_iou;
      m.val_obj_iou = rep.object_iou;
    }
    result.epochs.push_back(m);
  }
  return result;
}

SelectedBoxes two_step_reason(const DecodedSceneGraph& sg, const Query& query) {
  int b = static_cast<int>(sg.node_labels.size());
  if (b < 2) throw std::invalid_argument("two_step_reason: need at least two nodes");

  SelectedBoxes out;
  // Exact matches first: argmax labels form the queried triplet.
  for (size_t p = 0; p < sg.pairs.size(); ++p) {
    auto [i, j] = sg.pairs[p];
    int arg = 0;
    sg.edge_probs.row(static_cast<long>(p)).maxCoeff(&arg);
    if (sg.node_labels[i] == query.subject_cat && sg.node_labels[j] == query.object_cat &&
        arg == query.relation) {
      out.subjects.push_back(i);
      out.objects.push_back(j);
    }
  }
  if (!out.subjects.empty()) return out;

  // Fallback: most probable triplet, lexicographic (i, j) tie-break.
  double best = -1.0;
  int bi = 0, bj = 1;
  for (size_t p = 0; p < sg.pairs.size(); ++p) {
    auto [i, j] = sg.pairs[p];
    double v = sg.node_probs(i, query.subject_cat) *
               sg.edge_probs(static_cast<long>(p), query.relation) *
               sg.node_probs(j, query.object_cat);
    if (v > best) {
      best = v;
      bi = i;
      bj = j;
    }
  }
  out.subjects.push_back(bi);
  out.objects.push_back(bj);
  return out;
}

}  // namespace dsg
