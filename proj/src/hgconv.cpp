#include "hgmamba/hgconv.hpp"

#include <cmath>
#include <stdexcept>

#include "hgmamba/flops.hpp"

namespace hgmamba {
namespace {

// Sparse application of D^-1/2 H W_e D_e^-1 H^T D^-1/2 to pre-scaled rows.
// `scaled` must already carry one D^-1/2; the result carries the other.
// Fills `edge_means` (scaled per-edge means) when non-null.
Matrix propagate(const Hypergraph& hg,
                 const std::vector<std::uint32_t>& active_edges,
                 const std::vector<double>& edge_weights,
                 const std::vector<double>& inv_sqrt_deg, const Matrix& scaled,
                 Matrix* edge_means) {
  const std::size_t n = scaled.rows(), d = scaled.cols();
  Matrix out(n, d);
  std::vector<double> mean(d);
  for (const std::uint32_t e : active_edges) {
    const auto& members = hg.inc.edges[e];
    const double inv_delta = 1.0 / static_cast<double>(members.size());
    std::fill(mean.begin(), mean.end(), 0.0);
    for (const std::uint32_t v : members)
      for (std::size_t c = 0; c < d; ++c) mean[c] += scaled(v, c);
    for (std::size_t c = 0; c < d; ++c) mean[c] *= inv_delta;
    if (edge_means)
      for (std::size_t c = 0; c < d; ++c) (*edge_means)(e, c) = mean[c];
    const double w = edge_weights[e];
    for (const std::uint32_t v : members)
      for (std::size_t c = 0; c < d; ++c) out(v, c) += w * mean[c];
  }
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d; ++c) out(v, c) *= inv_sqrt_deg[v];
  return out;
}

}  // namespace

Matrix hgconv_forward(const Hypergraph& hg, const Matrix& x,
                      const HGConvParams& params, ConvMode mode,
                      HGConvCache* cache) {
  const std::size_t n = hg.n_nodes();
  if (x.rows() != n)
    throw std::invalid_argument("hgconv_forward: row count != node count");
  if (params.weight.value.rows() != x.cols())
    throw std::invalid_argument("hgconv_forward: weight rows != d_in");
  if (params.edge_weights.size() != hg.inc.n_edges())
    throw std::invalid_argument("hgconv_forward: edge weight count mismatch");
  require_finite(x, "hgconv_forward input");

  ComponentScope scope(Component::hgconv);
  const std::size_t d_out = params.weight.value.cols();
  const bool rule_only = mode == ConvMode::rule_only;
  const std::vector<double>& deg =
      rule_only ? hg.node_degree_rule : hg.node_degree;

  std::vector<std::uint32_t> active;
  active.reserve(hg.inc.n_edges());
  for (std::size_t e = 0; e < hg.inc.n_edges(); ++e)
    if (!rule_only || hg.inc.kinds[e] == EdgeKind::rule)
      active.push_back(static_cast<std::uint32_t>(e));

  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    if (deg[v] > 0.0) inv_sqrt_deg[v] = 1.0 / std::sqrt(deg[v]);

  Matrix xw = matmul(x, params.weight.value);
  Matrix scaled(n, d_out);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d_out; ++c)
      scaled(v, c) = xw(v, c) * inv_sqrt_deg[v];

  Matrix edge_means(hg.inc.n_edges(), d_out);
  Matrix pre = propagate(hg, active, params.edge_weights, inv_sqrt_deg, scaled,
                         &edge_means);

  std::size_t nnz_active = 0;
  for (const std::uint32_t e : active) nnz_active += hg.inc.edges[e].size();
  add_flops(hgconv_extra_flops(n, d_out, nnz_active, active.size()));

  Matrix out(n, d_out);
  const bool can_pass_through = x.cols() == d_out;
  for (std::size_t v = 0; v < n; ++v) {
    if (deg[v] == 0.0) {
      // Operator bypass: degree-0 nodes keep their input features.
      if (can_pass_through)
        for (std::size_t c = 0; c < d_out; ++c) out(v, c) = x(v, c);
      continue;
    }
    for (std::size_t c = 0; c < d_out; ++c)
      out(v, c) = pre(v, c) > 0.0 ? pre(v, c) : 0.0;
  }

  if (cache) {
    cache->x = x;
    cache->xw = std::move(xw);
    cache->pre_relu = std::move(pre);
    cache->edge_means = std::move(edge_means);
    cache->inv_sqrt_deg = std::move(inv_sqrt_deg);
    cache->active_edges = std::move(active);
    cache->mode = mode;
  }
  return out;
}

HGConvGrads hgconv_backward(const Hypergraph& hg, const HGConvParams& params,
                            const HGConvCache& cache, const Matrix& grad_out) {
  const std::size_t n = hg.n_nodes();
  const std::size_t d_out = params.weight.value.cols();
  const bool can_pass_through = cache.x.cols() == d_out;

  // ReLU mask; isolated rows carry no gradient through the operator.
  Matrix gz(n, d_out);
  for (std::size_t v = 0; v < n; ++v) {
    if (cache.inv_sqrt_deg[v] == 0.0) continue;
    for (std::size_t c = 0; c < d_out; ++c)
      gz(v, c) = cache.pre_relu(v, c) > 0.0 ? grad_out(v, c) : 0.0;
  }

  // Theta is symmetric, so the adjoint reuses the forward propagation with
  // the same frozen degrees and weights.
  Matrix gz_scaled(n, d_out);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d_out; ++c)
      gz_scaled(v, c) = gz(v, c) * cache.inv_sqrt_deg[v];
  Matrix gxw = propagate(hg, cache.active_edges, params.edge_weights,
                         cache.inv_sqrt_deg, gz_scaled, nullptr);

  HGConvGrads g;
  g.weight = matmul(transpose(cache.x), gxw);
  g.x = matmul(gxw, transpose(params.weight.value));
  for (std::size_t v = 0; v < n; ++v) {
    if (cache.inv_sqrt_deg[v] != 0.0 || !can_pass_through) continue;
    for (std::size_t c = 0; c < d_out; ++c) g.x(v, c) += grad_out(v, c);
  }

  // d z_i / d w(e) = h(i,e) * inv_sqrt_deg_i * edge_mean_e, degrees frozen.
  g.edge_weights.assign(hg.inc.n_edges(), 0.0);
  for (const std::uint32_t e : cache.active_edges) {
    double acc = 0.0;
    for (const std::uint32_t v : hg.inc.edges[e])
      for (std::size_t c = 0; c < d_out; ++c)
        acc += gz(v, c) * cache.inv_sqrt_deg[v] * cache.edge_means(e, c);
    g.edge_weights[e] = acc;
  }
  return g;
}

}  // namespace hgmamba
