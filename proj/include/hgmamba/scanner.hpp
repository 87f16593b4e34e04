#pragma once

#include <cstdint>
#include <vector>

#include "hgmamba/hypergraph.hpp"
#include "hgmamba/rng.hpp"

namespace hgmamba {

enum class ScanStrategy : std::uint8_t { hdfs = 0, harw = 1, random = 2 };

enum class ScanSetStrategy : std::uint8_t { both = 0, hdfs, harw, random };

/// One serialized traversal of a bag. `order` always has N entries; positions
/// >= n_valid form a contiguous padding suffix (order value 0, valid false).
/// `window` is the deterministic processing length downstream kernels use:
/// N for full covers, the target walk length for H-ARW.
struct ScanSequence {
  std::vector<std::uint32_t> order;
  std::vector<std::uint8_t> valid;
  std::size_t n_valid = 0;
  std::size_t window = 0;
  ScanStrategy strategy = ScanStrategy::hdfs;
  /// Positions whose node is not guaranteed hyperedge-adjacent to its
  /// predecessor: component roots, restarts, and DFS backtrack jumps.
  /// Position 0 is always recorded.
  std::vector<std::uint32_t> breaks;
};

/// Depth-first hyperedge traversal. Expanding a node pushes every unvisited
/// member of its incident hyperedges in rng-shuffled order; when the stack
/// drains with nodes left, a new root is drawn uniformly from the unvisited
/// set. Visits every node exactly once (length N, no padding).
ScanSequence h_dfs(const Hypergraph& hg, Rng& rng);

/// Acyclic random walk: from the current node step uniformly to an unvisited
/// node sharing a hyperedge, until t_len nodes are visited or no such node
/// exists. Remaining positions are padding.
ScanSequence h_arw(const Hypergraph& hg, Rng& rng, std::size_t t_len);

/// Uniform node shuffle; benchmark baseline only (no adjacency structure, so
/// every position is recorded as a break).
ScanSequence random_scan(const Hypergraph& hg, Rng& rng);

/// Node -> (sequence, position) sites over valid entries only.
struct ScanSet {
  std::vector<ScanSequence> seqs;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> membership;

  std::size_t total_valid_tokens() const;
  std::size_t covered_nodes() const;
};

/// m sequences: under `both`, ceil(m/2) H-DFS then floor(m/2) H-ARW with
/// t_len = max(1, ceil(t_ratio * N)); other strategies emit m of one kind.
/// Each sequence draws from an independent sub-seed of `seed`.
ScanSet build_scan_set(const Hypergraph& hg, std::size_t m, double t_ratio,
                       std::uint64_t seed,
                       ScanSetStrategy strategy = ScanSetStrategy::both);

}  // namespace hgmamba
