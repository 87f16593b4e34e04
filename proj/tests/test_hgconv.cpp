#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hgmamba/flops.hpp"
#include "hgmamba/hgconv.hpp"
#include "hgmamba/model.hpp"
#include "hgmamba/rng.hpp"

using namespace hgmamba;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.raw()[i] = rng.normal();
  return m;
}

TileBag random_bag(std::uint64_t seed, std::size_t rows, std::size_t cols,
                   std::size_t dim) {
  Rng rng(seed);
  TileBag bag;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      bag.coords.push_back(
          {static_cast<std::int32_t>(r), static_cast<std::int32_t>(c)});
    }
  }
  bag.features = random_matrix(rng, rows * cols, dim);
  return bag;
}

// Dense oracle: ReLU(Theta X W) with isolated-node pass-through.
Matrix dense_oracle(const Hypergraph& hg, const Matrix& x,
                    const HGConvParams& params, ConvMode mode) {
  Incidence filtered;
  filtered.n_nodes = hg.inc.n_nodes;
  std::vector<double> weights;
  for (std::size_t e = 0; e < hg.inc.n_edges(); ++e) {
    if (mode == ConvMode::rule_only && hg.inc.kinds[e] != EdgeKind::rule) {
      continue;
    }
    filtered.edges.push_back(hg.inc.edges[e]);
    filtered.kinds.push_back(hg.inc.kinds[e]);
    filtered.weights.push_back(hg.inc.weights[e]);
    weights.push_back(params.edge_weights.empty()
                          ? 1.0
                          : params.edge_weights[e]);
  }
  const Hypergraph sub = compute_degrees(filtered);
  const Matrix theta = propagation_matrix(sub, weights);
  Matrix out = matmul(theta, matmul(x, params.weight.value));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.raw()[i] = std::max(0.0, out.raw()[i]);
  }
  // Isolated nodes bypass the operator entirely.
  for (std::size_t v = 0; v < sub.n_nodes(); ++v) {
    if (sub.node_degree[v] != 0.0) continue;
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out(v, j) = x.cols() == out.cols() ? x(v, j) : 0.0;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pinned 2-node example: X=[[1],[3]] propagates to [[2],[2]]") {
  TileBag bag;
  bag.coords = {{0, 0}, {0, 1}};
  bag.features = Matrix::from_rows({{1}, {3}});
  const Hypergraph hg = compute_degrees(build_rule_adjacency(bag));
  HGConvParams params{GradSlot(Matrix::from_rows({{1}})), {1.0}};
  const Matrix y =
      hgconv_forward(hg, bag.features, params, ConvMode::hypergraph, nullptr);
  CHECK(y(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(y(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero input gives zero output") {
  const TileBag bag = random_bag(1, 2, 3, 4);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  Rng rng(2);
  HGConvParams params{GradSlot(random_matrix(rng, 4, 4)), {}};
  params.edge_weights.assign(hg.inc.n_edges(), 1.0);
  const Matrix zero(bag.size(), 4);
  const Matrix y = hgconv_forward(hg, zero, params, ConvMode::hypergraph,
                                  nullptr);
  CHECK(max_abs_diff(y, Matrix(bag.size(), 4)) == 0.0);
}

TEST_CASE("sparse path equals the dense oracle on 50 random instances") {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    Rng rng(seed);
    const std::size_t rows = 1 + rng.uniform_below(4);
    const std::size_t cols = 2 + rng.uniform_below(4);
    const std::size_t d_in = 2 + rng.uniform_below(4);
    const std::size_t d_out = 2 + rng.uniform_below(4);
    const TileBag bag = random_bag(seed * 7 + 1, rows, cols, d_in);
    const Hypergraph hg = build_bag_hypergraph(bag, 2);
    HGConvParams params{GradSlot(random_matrix(rng, d_in, d_out)), {}};
    params.edge_weights.reserve(hg.inc.n_edges());
    for (std::size_t e = 0; e < hg.inc.n_edges(); ++e) {
      params.edge_weights.push_back(0.5 + rng.uniform());
    }
    const ConvMode mode =
        seed % 2 == 0 ? ConvMode::hypergraph : ConvMode::rule_only;
    const Matrix sparse =
        hgconv_forward(hg, bag.features, params, mode, nullptr);
    CHECK(max_abs_diff(sparse, dense_oracle(hg, bag.features, params, mode)) <
          1e-10);
  }
}

TEST_CASE("rule_only output ignores sim hyperedges entirely") {
  const TileBag bag = random_bag(3, 3, 3, 5);
  Rng rng(4);
  const Matrix w = random_matrix(rng, 5, 5);

  const Hypergraph with_sim = build_bag_hypergraph(bag, 3);
  HGConvParams p1{GradSlot(w), {}};
  p1.edge_weights.assign(with_sim.inc.n_edges(), 1.0);
  const Matrix y1 =
      hgconv_forward(with_sim, bag.features, p1, ConvMode::rule_only, nullptr);

  const Hypergraph rule_only = compute_degrees(build_rule_adjacency(bag));
  HGConvParams p2{GradSlot(w), {}};
  p2.edge_weights.assign(rule_only.inc.n_edges(), 1.0);
  const Matrix y2 = hgconv_forward(rule_only, bag.features, p2,
                                   ConvMode::hypergraph, nullptr);
  CHECK(max_abs_diff(y1, y2) < 1e-12);
}

TEST_CASE("isolated node passes through when dims match, else zero") {
  TileBag bag;
  bag.coords = {{0, 0}, {0, 1}, {5, 5}};
  bag.features = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  Incidence inc = build_rule_adjacency(bag);  // only {0,1}; node 2 isolated
  const Hypergraph hg = compute_degrees(inc);
  REQUIRE(hg.node_degree[2] == 0.0);

  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0;
  HGConvParams square{GradSlot(eye), {1.0}};
  const Matrix y =
      hgconv_forward(hg, bag.features, square, ConvMode::hypergraph, nullptr);
  CHECK(y(2, 0) == 5.0);
  CHECK(y(2, 1) == 6.0);

  HGConvParams rect{GradSlot(Matrix(2, 3, 0.5)), {1.0}};
  const Matrix z =
      hgconv_forward(hg, bag.features, rect, ConvMode::hypergraph, nullptr);
  for (std::size_t j = 0; j < 3; ++j) CHECK(z(2, j) == 0.0);
}

TEST_CASE("backward: zero grad_out gives zero gradients") {
  const TileBag bag = random_bag(6, 2, 3, 4);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  Rng rng(7);
  HGConvParams params{GradSlot(random_matrix(rng, 4, 3)), {}};
  params.edge_weights.assign(hg.inc.n_edges(), 1.0);
  HGConvCache cache;
  hgconv_forward(hg, bag.features, params, ConvMode::hypergraph, &cache);
  const HGConvGrads grads =
      hgconv_backward(hg, params, cache, Matrix(bag.size(), 3));
  CHECK(max_abs_diff(grads.x, Matrix(bag.size(), 4)) == 0.0);
  CHECK(max_abs_diff(grads.weight, Matrix(4, 3)) == 0.0);
  for (const double g : grads.edge_weights) CHECK(g == 0.0);
}

TEST_CASE("backward matches finite differences") {
  const TileBag bag = random_bag(8, 2, 3, 3);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  Rng rng(9);
  HGConvParams params{GradSlot(random_matrix(rng, 3, 3)), {}};
  params.edge_weights.assign(hg.inc.n_edges(), 1.0);
  const Matrix proj = random_matrix(rng, bag.size(), 3);

  HGConvCache cache;
  hgconv_forward(hg, bag.features, params, ConvMode::hypergraph, &cache);
  const HGConvGrads grads = hgconv_backward(hg, params, cache, proj);

  const auto loss = [&](const Matrix& probe) {
    const Matrix y =
        hgconv_forward(hg, probe, params, ConvMode::hypergraph, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.raw()[i] * proj.raw()[i];
    return s;
  };
  CHECK(relative_error(grads.x, finite_difference_gradient(loss, bag.features)) <
        1e-4);
}

TEST_CASE("forward flops match the closed-form count") {
  const TileBag bag = random_bag(11, 3, 4, 5);
  const Hypergraph hg = build_bag_hypergraph(bag, 3);
  Rng rng(12);
  HGConvParams params{GradSlot(random_matrix(rng, 5, 6)), {}};
  params.edge_weights.assign(hg.inc.n_edges(), 1.0);

  reset_flops();
  hgconv_forward(hg, bag.features, params, ConvMode::hypergraph, nullptr);
  CHECK(component_flops(Component::hgconv) ==
        hgconv_flops(bag.size(), 5, 6, hg.inc.nnz(), hg.inc.n_edges()));

  reset_flops();
  hgconv_forward(hg, bag.features, params, ConvMode::rule_only, nullptr);
  CHECK(component_flops(Component::hgconv) ==
        hgconv_flops(bag.size(), 5, 6, hg.inc.nnz(EdgeKind::rule),
                     hg.inc.edge_count(EdgeKind::rule)));
}
