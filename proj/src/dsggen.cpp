#include "dsg/dsggen.hpp"

#include <stdexcept>

namespace dsg {

GpiParams make_gpi_params(ParamStore& store, const std::string& prefix, int z_dim,
                          int hidden_dim, int value_dim, int summary_dim, int out_dim,
                          Rng& rng) {
  GpiParams p;
  p.value_dim = value_dim;
  p.summary_dim = summary_dim;
  p.phi = make_mlp(store, prefix + ".phi", {3 * z_dim, hidden_dim, value_dim + 1}, rng);
  p.alpha = make_mlp(store, prefix + ".alpha", {z_dim + value_dim, hidden_dim, summary_dim + 1}, rng);
  p.rho_entity = make_mlp(store, prefix + ".rho_entity", {z_dim + summary_dim, hidden_dim, out_dim}, rng);
  p.rho_relation =
      make_mlp(store, prefix + ".rho_relation", {z_dim + summary_dim, hidden_dim, out_dim}, rng);
  return p;
}

DsgOutput gpi_forward(Graph& g, const GpiParams& params, Tensor zs, Tensor z_pairs,
                      const std::vector<std::pair<int, int>>& pairs, GpiMode mode) {
  int b = zs.shape()[0];
  if (b < 1) throw std::invalid_argument("gpi_forward: need at least one node");
  int p = static_cast<int>(pairs.size());
  if (p != b * (b - 1)) {
    throw std::invalid_argument("gpi_forward: expected all ordered pairs i != j");
  }
  for (int i = 0; i < b; ++i) {
    for (int j = 0, col = 0; j < b; ++j) {
      if (j == i) continue;
      if (pairs[i * (b - 1) + col] != std::make_pair(i, j)) {
        throw std::invalid_argument("gpi_forward: pairs must be laid out i-major");
      }
      ++col;
    }
  }

  DsgOutput out;
  Tensor per_node_sum;  // [B, value_dim]
  Tensor phi_val;       // [P, value_dim]

  if (p == 0) {
    per_node_sum = g.zeros({b, params.value_dim});
  } else {
    std::vector<int> firsts(p), seconds(p);
    for (int k = 0; k < p; ++k) {
      firsts[k] = pairs[k].first;
      seconds[k] = pairs[k].second;
    }
    Tensor phi_in = concat({gather_rows(zs, firsts), z_pairs, gather_rows(zs, seconds)}, 1);
    Tensor phi_out = mlp_forward(g, params.phi, phi_in);
    phi_val = slice_cols(phi_out, 0, params.value_dim);
    if (mode == GpiMode::kSum) {
      // Segment sums via a constant 0/1 selection matrix.
      Array sel = Array::Zero(static_cast<long>(b) * p);
      for (int k = 0; k < p; ++k) sel[static_cast<long>(pairs[k].first) * p + k] = 1.0;
      per_node_sum = matmul(g.constant({b, p}, std::move(sel)), phi_val);
    } else {
      Tensor phi_score = slice_cols(phi_out, params.value_dim, params.value_dim + 1);
      std::vector<Tensor> rows;
      int per = b - 1;
      for (int i = 0; i < b; ++i) {
        Tensor seg_scores = reshape(slice_rows(phi_score, i * per, (i + 1) * per), {per});
        Tensor w = reshape(softmax_weights(seg_scores), {1, per});
        rows.push_back(matmul(w, slice_rows(phi_val, i * per, (i + 1) * per)));
      }
      per_node_sum = concat(rows, 0);
    }
  }

  Tensor alpha_out = mlp_forward(g, params.alpha, concat({zs, per_node_sum}, 1));
  Tensor alpha_val = slice_cols(alpha_out, 0, params.summary_dim);
  if (mode == GpiMode::kSum) {
    out.g = matmul(g.ones({1, b}), alpha_val);
  } else {
    Tensor alpha_score = reshape(slice_cols(alpha_out, params.summary_dim, params.summary_dim + 1),
                                 {b});
    out.outer_weights = softmax_weights(alpha_score);
    out.has_outer_weights = true;
    out.g = matmul(reshape(out.outer_weights, {1, b}), alpha_val);
  }

  Tensor g_tiled_nodes = matmul(g.ones({b, 1}), out.g);
  out.nodes = mlp_forward(g, params.rho_entity, concat({zs, g_tiled_nodes}, 1));
  if (p > 0) {
    Tensor g_tiled_edges = matmul(g.ones({p, 1}), out.g);
    out.edges = mlp_forward(g, params.rho_relation, concat({z_pairs, g_tiled_edges}, 1));
    out.has_edges = true;
  }
  return out;
}

std::vector<double> attention_weights_report(Graph& g, const GpiParams& params, Tensor zs,
                                             Tensor z_pairs,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             GpiMode mode) {
  if (mode != GpiMode::kAttention) {
    throw std::logic_error("attention_weights_report: only defined in attention mode");
  }
  DsgOutput out = gpi_forward(g, params, zs, z_pairs, pairs, mode);
  const Array& w = out.outer_weights.values();
  return std::vector<double>(w.data(), w.data() + w.size());
}

}  // namespace dsg
