#pragma once

#include <vector>

#include "hgmamba/hypergraph.hpp"
#include "hgmamba/matrix.hpp"

namespace hgmamba {

enum class ConvMode { hypergraph, rule_only };

struct HGConvParams {
  GradSlot weight;                   // d_in x d_out
  std::vector<double> edge_weights;  // one positive real per hyperedge
};

/// Forward/backward bookkeeping for one hgconv application.
struct HGConvCache {
  Matrix x;           // input reference copy, N x d_in
  Matrix xw;          // x * W, N x d_out
  Matrix pre_relu;    // propagated pre-activation, N x d_out
  Matrix edge_means;  // per-edge scaled means of D^-1/2 xw, E x d_out
  std::vector<double> inv_sqrt_deg;  // 0 for isolated nodes
  std::vector<std::uint32_t> active_edges;  // edges used under the mode
  ConvMode mode = ConvMode::hypergraph;
};

/// One hypergraph convolution sigma(Theta * X * W) evaluated by sparse
/// gather/scatter over the incidence lists; Theta is never materialized.
/// rule_only restricts propagation (and the degrees used) to rule edges.
/// Isolated nodes bypass the operator: their output row equals the input row
/// when d_in == d_out and is zero otherwise.
Matrix hgconv_forward(const Hypergraph& hg, const Matrix& x,
                      const HGConvParams& params, ConvMode mode,
                      HGConvCache* cache = nullptr);

struct HGConvGrads {
  Matrix x;
  Matrix weight;
  std::vector<double> edge_weights;
};

/// Exact gradients for x and W. Edge-weight gradients treat node degrees as
/// constants (they are refreshed outside the step), so they match finite
/// differences only under frozen degrees.
HGConvGrads hgconv_backward(const Hypergraph& hg, const HGConvParams& params,
                            const HGConvCache& cache, const Matrix& grad_out);

}  // namespace hgmamba
