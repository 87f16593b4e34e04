#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgmamba/matrix.hpp"

namespace hgmamba {

struct Coord {
  std::int32_t row = 0;
  std::int32_t col = 0;
};

/// One bag of feature tiles on an integer grid. Coordinates may arrive in any
/// order; construction routines canonicalize internally.
struct TileBag {
  std::string id;
  std::vector<Coord> coords;  // one per tile
  Matrix features;            // N x d
  int label = 0;

  std::size_t size() const { return coords.size(); }
};

enum class EdgeKind : std::uint8_t { rule = 0, sim = 1 };

/// Hyperedge incidence structure: member lists are sorted ascending and may
/// repeat across edges (duplicates are kept as distinct columns).
struct Incidence {
  std::size_t n_nodes = 0;
  std::vector<std::vector<std::uint32_t>> edges;
  std::vector<EdgeKind> kinds;
  std::vector<double> weights;

  std::size_t n_edges() const { return edges.size(); }
  std::size_t nnz() const;
  std::size_t nnz(EdgeKind k) const;
  std::size_t edge_count(EdgeKind k) const;
};

/// Incidence plus the derived lookups every consumer needs: weighted node
/// degrees (full and rule-only), edge degrees, and the node -> incident-edge
/// index used by traversals and sparse propagation.
struct Hypergraph {
  Incidence inc;
  std::vector<double> node_degree;       // sum of w(e) over incident edges
  std::vector<double> node_degree_rule;  // same, rule edges only
  std::vector<std::size_t> edge_degree;  // member count per edge
  std::vector<std::vector<std::uint32_t>> node_edges;  // sorted edge ids

  std::size_t n_nodes() const { return inc.n_nodes; }
};

/// 4-neighbor grid adjacency as 2-member hyperedges, weight 1. Tiles are
/// scanned in canonical row-major coordinate order; all right-neighbor edges
/// are emitted first, then all down-neighbor edges, so the edge list is a
/// pure function of the coordinate set. Duplicate coordinates are an error.
Incidence build_rule_adjacency(const TileBag& bag);

/// Cosine similarity; either vector having zero norm yields -infinity so
/// zero-feature tiles lose every top-k comparison.
double cosine_similarity(const Matrix& features, std::size_t i, std::size_t j);

/// One hyperedge per tile: the anchor plus its k most cosine-similar other
/// tiles (ties broken toward the lower index). k is clamped to N-1; bags with
/// fewer than 2 tiles produce no edges. Weight 1, members sorted.
Incidence build_similarity_hyperedges(const TileBag& bag, std::size_t k);

/// Concatenates rule columns then sim columns. No deduplication: an edge
/// present in both blocks appears twice by design.
Incidence unify(const Incidence& rule, const Incidence& sim);

/// Builds degree vectors and the node->edge index. Degree-0 nodes are legal;
/// normalization treats their D_v^{-1/2} entry as 0 downstream.
Hypergraph compute_degrees(Incidence inc);

/// Re-derives weighted node degrees after edge weights change; structure and
/// edge degrees are untouched.
void refresh_degrees(Hypergraph& hg, const std::vector<double>& edge_weights);

/// Dense propagation operator
///   Theta = D_v^{-1/2} H W_e D_e^{-1} H^T D_v^{-1/2},
/// materialized for tests and small-N inspection only (row of an isolated
/// node is 0). `edge_weights` overrides inc.weights when non-empty.
Matrix propagation_matrix(const Hypergraph& hg,
                          const std::vector<double>& edge_weights = {});

}  // namespace hgmamba
