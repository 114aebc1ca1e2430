#pragma once

#include "dsg/autodiff.hpp"
#include "dsg/nn.hpp"

#include <utility>
#include <vector>

namespace dsg {

enum class GpiMode { kSum, kAttention };

// phi consumes (z_i, z_ij, z_j) and emits a value vector plus one attention
// score column; alpha consumes (z_i, s_i) likewise; the rho nets map a node
// or edge together with the global summary g to its contextualized vector.
struct GpiParams {
  MlpParams phi;          // [z + z + z] -> value_dim + 1
  MlpParams alpha;        // [z + value_dim] -> summary_dim + 1
  MlpParams rho_entity;   // [z + summary_dim] -> out_dim
  MlpParams rho_relation; // [z + summary_dim] -> out_dim
  int value_dim = 0;
  int summary_dim = 0;
};

GpiParams make_gpi_params(ParamStore& store, const std::string& prefix, int z_dim,
                          int hidden_dim, int value_dim, int summary_dim, int out_dim,
                          Rng& rng);

struct DsgOutput {
  Tensor g;              // [1, summary_dim]
  Tensor nodes;          // [B, out_dim]
  Tensor edges;          // [P, out_dim]; only when pair_count > 0
  Tensor outer_weights;  // [B]; only in attention mode
  bool has_edges = false;
  bool has_outer_weights = false;
};

// zs: [B, z], z_pairs: [P, z] with all ordered pairs (i, j), i != j, laid out
// i-major. A single node (B == 1) aggregates an empty neighborhood to the
// zero vector in both modes.
DsgOutput gpi_forward(Graph& g, const GpiParams& params, Tensor zs, Tensor z_pairs,
                      const std::vector<std::pair<int, int>>& pairs, GpiMode mode);

// Outer aggregation weights over nodes, for diagnostics and rendering.
// Throws std::logic_error when called in sum mode.
std::vector<double> attention_weights_report(Graph& g, const GpiParams& params, Tensor zs,
                                             Tensor z_pairs,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             GpiMode mode);

}  // namespace dsg
