#include "dsg/model.hpp"

namespace dsg {

ModelParams build_model(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  ModelParams m;
  m.embed = make_mlp(store, "embed", {kDescriptorDim, cfg.embed_hidden, cfg.feat_dim}, rng);
  m.gpi = make_gpi_params(store, "gpi", cfg.z_dim(), cfg.gpi_hidden, cfg.value_dim,
                          cfg.summary_dim, cfg.zprime_dim, rng);
  m.query_embed = make_query_embedding(store, "query", cfg.query_embed_dim, rng);
  m.rrc = make_mlp(store, "rrc",
                   {cfg.head_dim() + 3 * cfg.query_embed_dim, cfg.rrc_hidden, kNumRoles}, rng);
  m.refiner = make_refiner(store, "refiner", cfg.head_dim(), rng);
  m.labelers = make_labelers(store, "sgl", cfg.head_dim(), cfg.head_dim(), rng);
  return m;
}

namespace {

Tensor matrix_constant(Graph& g, const MatrixRM& m) {
  Array flat = Eigen::Map<const Array>(m.data(), m.size());
  return g.constant({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(flat));
}

MatrixRM boxes_matrix(const std::vector<Box>& boxes) {
  MatrixRM m(static_cast<long>(boxes.size()), 4);
  for (size_t i = 0; i < boxes.size(); ++i) {
    m(static_cast<long>(i), 0) = boxes[i].x;
    m(static_cast<long>(i), 1) = boxes[i].y;
    m(static_cast<long>(i), 2) = boxes[i].w;
    m(static_cast<long>(i), 3) = boxes[i].h;
  }
  return m;
}

MatrixRM tensor_matrix(const Tensor& t) {
  return ConstMatMap(t.values().data(), t.rows(), t.cols());
}

}  // namespace

SceneForward model_forward(Graph& g, const ModelParams& params, const ModelConfig& cfg,
                           const BoxSet& boxset) {
  SceneForward out;
  out.boxes = matrix_constant(g, boxes_matrix(boxset.boxes));
  Tensor node_f = mlp_forward(g, params.embed, matrix_constant(g, boxset.desc));
  out.z_nodes = concat({node_f, out.boxes}, 1);
  Tensor union_boxes = matrix_constant(g, boxes_matrix(boxset.union_boxes));
  Tensor edge_f = mlp_forward(g, params.embed, matrix_constant(g, boxset.union_desc));
  out.z_edges = concat({edge_f, union_boxes}, 1);

  if (cfg.flags.use_dsg) {
    out.dsg = gpi_forward(g, params.gpi, out.z_nodes, out.z_edges, boxset.pairs, cfg.mode);
    out.has_dsg = true;
    out.node_feats = out.dsg.nodes;
    out.edge_feats = out.dsg.edges;
  } else {
    out.node_feats = out.z_nodes;
    out.edge_feats = out.z_edges;
  }

  if (cfg.flags.use_box_refiner) {
    out.refined = refine_boxes(g, params.refiner, out.node_feats, out.boxes);
    out.has_refined = true;
  }
  return out;
}

SceneEval evaluate_scene(const ModelParams& params, const ModelConfig& cfg, const Scene& scene,
                         const BoxSet& boxset) {
  Graph g;
  SceneForward fwd = model_forward(g, params, cfg, boxset);
  SceneEval ev;
  ev.boxes = boxset.boxes;
  ev.pairs = boxset.pairs;
  if (fwd.has_refined) {
    MatrixRM refined = tensor_matrix(fwd.refined);
    for (long i = 0; i < refined.rows(); ++i) {
      ev.out_boxes.push_back(Box{refined(i, 0), refined(i, 1), refined(i, 2), refined(i, 3)});
    }
  } else {
    ev.out_boxes = boxset.boxes;
  }
  for (size_t q = 0; q < scene.queries.size(); ++q) {
    const Query& query = scene.queries[q];
    Tensor qv = query_vector(g, params.query_embed, query.subject_cat, query.relation,
                             query.object_cat);
    ev.query_role_logits.push_back(tensor_matrix(rr_logits(g, params.rrc, fwd.node_feats, qv)));
  }
  ev.entity_logits = tensor_matrix(entity_label_logits(g, params.labelers, fwd.node_feats));
  if (boxset.pair_count() > 0) {
    ev.relation_logits = tensor_matrix(relation_label_logits(g, params.labelers, fwd.edge_feats));
  }
  if (fwd.has_dsg && fwd.dsg.has_outer_weights) {
    const Array& w = fwd.dsg.outer_weights.values();
    ev.outer_weights.assign(w.data(), w.data() + w.size());
  }
  return ev;
}

}  // namespace dsg
