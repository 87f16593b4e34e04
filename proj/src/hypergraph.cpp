#include "hgmamba/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

namespace hgmamba {

std::size_t Incidence::nnz() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

std::size_t Incidence::nnz(EdgeKind k) const {
  std::size_t n = 0;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (kinds[e] == k) n += edges[e].size();
  return n;
}

std::size_t Incidence::edge_count(EdgeKind k) const {
  std::size_t n = 0;
  for (const auto kk : kinds)
    if (kk == k) ++n;
  return n;
}

Incidence build_rule_adjacency(const TileBag& bag) {
  const std::size_t n = bag.size();
  std::map<std::pair<std::int32_t, std::int32_t>, std::uint32_t> by_coord;
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = std::make_pair(bag.coords[i].row, bag.coords[i].col);
    if (!by_coord.emplace(key, static_cast<std::uint32_t>(i)).second)
      throw std::invalid_argument("build_rule_adjacency: duplicate coordinate");
  }

  Incidence inc;
  inc.n_nodes = n;
  // std::map iteration is already canonical row-major order. Right edges
  // first, then down edges, so the emitted order is enumeration-independent.
  const auto emit = [&](std::uint32_t a, std::uint32_t b) {
    std::vector<std::uint32_t> members{a, b};
    std::sort(members.begin(), members.end());
    inc.edges.push_back(std::move(members));
    inc.kinds.push_back(EdgeKind::rule);
    inc.weights.push_back(1.0);
  };
  for (const auto& [key, idx] : by_coord) {
    const auto it = by_coord.find({key.first, key.second + 1});
    if (it != by_coord.end()) emit(idx, it->second);
  }
  for (const auto& [key, idx] : by_coord) {
    const auto it = by_coord.find({key.first + 1, key.second});
    if (it != by_coord.end()) emit(idx, it->second);
  }
  return inc;
}

double cosine_similarity(const Matrix& features, std::size_t i,
                         std::size_t j) {
  const std::size_t d = features.cols();
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double a = features(i, c), b = features(j, c);
    dot += a * b;
    ni += a * a;
    nj += b * b;
  }
  if (ni == 0.0 || nj == 0.0)
    return -std::numeric_limits<double>::infinity();
  return dot / (std::sqrt(ni) * std::sqrt(nj));
}

Incidence build_similarity_hyperedges(const TileBag& bag, std::size_t k) {
  const std::size_t n = bag.size();
  if (k == 0)
    throw std::invalid_argument("build_similarity_hyperedges: k must be >= 1");

  Incidence inc;
  inc.n_nodes = n;
  if (n < 2) return inc;

  const std::size_t kk = std::min(k, n - 1);
  std::vector<std::pair<double, std::uint32_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back(cosine_similarity(bag.features, i, j),
                        static_cast<std::uint32_t>(j));
    }
    // Highest similarity first; equal similarity resolves to lower index.
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::vector<std::uint32_t> members;
    members.reserve(kk + 1);
    members.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t t = 0; t < kk; ++t) members.push_back(cand[t].second);
    std::sort(members.begin(), members.end());
    inc.edges.push_back(std::move(members));
    inc.kinds.push_back(EdgeKind::sim);
    inc.weights.push_back(1.0);
  }
  return inc;
}

Incidence unify(const Incidence& rule, const Incidence& sim) {
  if (rule.n_nodes != sim.n_nodes)
    throw std::invalid_argument("unify: node counts disagree");
  Incidence out = rule;
  out.edges.insert(out.edges.end(), sim.edges.begin(), sim.edges.end());
  out.kinds.insert(out.kinds.end(), sim.kinds.begin(), sim.kinds.end());
  out.weights.insert(out.weights.end(), sim.weights.begin(),
                     sim.weights.end());
  return out;
}

Hypergraph compute_degrees(Incidence inc) {
  Hypergraph hg;
  hg.node_degree.assign(inc.n_nodes, 0.0);
  hg.node_degree_rule.assign(inc.n_nodes, 0.0);
  hg.edge_degree.resize(inc.n_edges());
  hg.node_edges.assign(inc.n_nodes, {});
  for (std::size_t e = 0; e < inc.n_edges(); ++e) {
    if (inc.edges[e].empty())
      throw std::invalid_argument("compute_degrees: empty hyperedge");
    if (!(inc.weights[e] > 0.0))
      throw std::invalid_argument("compute_degrees: non-positive edge weight");
    hg.edge_degree[e] = inc.edges[e].size();
    for (const std::uint32_t v : inc.edges[e]) {
      if (v >= inc.n_nodes)
        throw std::invalid_argument("compute_degrees: member out of range");
      hg.node_degree[v] += inc.weights[e];
      if (inc.kinds[e] == EdgeKind::rule)
        hg.node_degree_rule[v] += inc.weights[e];
      hg.node_edges[v].push_back(static_cast<std::uint32_t>(e));
    }
  }
  hg.inc = std::move(inc);
  return hg;
}

void refresh_degrees(Hypergraph& hg, const std::vector<double>& edge_weights) {
  if (edge_weights.size() != hg.inc.n_edges())
    throw std::invalid_argument("refresh_degrees: weight count mismatch");
  hg.inc.weights = edge_weights;
  std::fill(hg.node_degree.begin(), hg.node_degree.end(), 0.0);
  std::fill(hg.node_degree_rule.begin(), hg.node_degree_rule.end(), 0.0);
  for (std::size_t e = 0; e < hg.inc.n_edges(); ++e) {
    if (!(edge_weights[e] > 0.0))
      throw std::invalid_argument("refresh_degrees: non-positive edge weight");
    for (const std::uint32_t v : hg.inc.edges[e]) {
      hg.node_degree[v] += edge_weights[e];
      if (hg.inc.kinds[e] == EdgeKind::rule)
        hg.node_degree_rule[v] += edge_weights[e];
    }
  }
}

Matrix propagation_matrix(const Hypergraph& hg,
                          const std::vector<double>& edge_weights) {
  const std::size_t n = hg.n_nodes();
  const std::vector<double>& w =
      edge_weights.empty() ? hg.inc.weights : edge_weights;
  if (w.size() != hg.inc.n_edges())
    throw std::invalid_argument("propagation_matrix: weight count mismatch");

  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    if (hg.node_degree[v] > 0.0)
      inv_sqrt_deg[v] = 1.0 / std::sqrt(hg.node_degree[v]);

  Matrix theta(n, n);
  for (std::size_t e = 0; e < hg.inc.n_edges(); ++e) {
    const double scale = w[e] / static_cast<double>(hg.edge_degree[e]);
    for (const std::uint32_t i : hg.inc.edges[e])
      for (const std::uint32_t j : hg.inc.edges[e])
        theta(i, j) += inv_sqrt_deg[i] * scale * inv_sqrt_deg[j];
  }
  return theta;
}

}  // namespace hgmamba
