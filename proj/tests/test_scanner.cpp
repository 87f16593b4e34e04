#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "hgmamba/model.hpp"
#include "hgmamba/rng.hpp"
#include "hgmamba/scanner.hpp"

using namespace hgmamba;

namespace {

TileBag random_bag(std::uint64_t seed, std::size_t rows, std::size_t cols,
                   std::size_t dim = 4) {
  Rng rng(seed);
  TileBag bag;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      bag.coords.push_back(
          {static_cast<std::int32_t>(r), static_cast<std::int32_t>(c)});
    }
  }
  bag.features = Matrix(rows * cols, dim);
  for (std::size_t i = 0; i < bag.features.size(); ++i) {
    bag.features.raw()[i] = rng.normal();
  }
  return bag;
}

Hypergraph path_graph(std::size_t n) {
  Incidence inc;
  inc.n_nodes = n;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    inc.edges.push_back(
        {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1)});
    inc.kinds.push_back(EdgeKind::rule);
    inc.weights.push_back(1.0);
  }
  return compute_degrees(inc);
}

bool share_edge(const Hypergraph& hg, std::uint32_t a, std::uint32_t b) {
  for (const std::uint32_t e : hg.node_edges[a]) {
    const auto& members = hg.inc.edges[e];
    if (std::find(members.begin(), members.end(), b) != members.end()) {
      return true;
    }
  }
  return false;
}

// The three structural invariants every sequence must satisfy: contiguous
// valid prefix, no repeated valid node, and hyperedge adjacency everywhere a
// break is not declared.
void check_sequence(const Hypergraph& hg, const ScanSequence& seq,
                    bool contiguous_walk) {
  REQUIRE(seq.order.size() == hg.n_nodes());
  REQUIRE(seq.valid.size() == hg.n_nodes());
  REQUIRE(seq.n_valid >= 1);
  REQUIRE(seq.n_valid <= hg.n_nodes());
  for (std::size_t p = 0; p < seq.order.size(); ++p) {
    CHECK(seq.valid[p] == (p < seq.n_valid ? 1 : 0));
    if (p >= seq.n_valid) CHECK(seq.order[p] == 0);
  }
  std::set<std::uint32_t> seen;
  for (std::size_t p = 0; p < seq.n_valid; ++p) {
    CHECK(seq.order[p] < hg.n_nodes());
    CHECK(seen.insert(seq.order[p]).second);
  }
  const std::set<std::uint32_t> break_set(seq.breaks.begin(),
                                          seq.breaks.end());
  CHECK(break_set.count(0) == 1);
  for (std::size_t p = 1; p < seq.n_valid; ++p) {
    const bool adjacent = share_edge(hg, seq.order[p - 1], seq.order[p]);
    if (!adjacent) CHECK(break_set.count(static_cast<std::uint32_t>(p)) == 1);
    if (contiguous_walk && p < seq.n_valid) CHECK(adjacent);
  }
}

}  // namespace

TEST_CASE("h_dfs on a path hypergraph visits in path order") {
  // Path {0,1},{1,2}: whatever the root, a DFS emits a permutation; with
  // root 0 the only depth-first order is (0,1,2). Roots are rng-chosen, so
  // scan seeds until root 0 appears.
  const Hypergraph hg = path_graph(3);
  bool saw_root0 = false;
  for (std::uint64_t seed = 0; seed < 64 && !saw_root0; ++seed) {
    Rng rng(seed);
    const ScanSequence seq = h_dfs(hg, rng);
    check_sequence(hg, seq, false);
    CHECK(seq.n_valid == 3);
    if (seq.order[0] == 0) {
      saw_root0 = true;
      CHECK(seq.order[1] == 1);
      CHECK(seq.order[2] == 2);
      CHECK(seq.breaks.size() == 1);  // no restarts on a connected path
    }
  }
  CHECK(saw_root0);
}

TEST_CASE("h_dfs handles a single node") {
  const Hypergraph hg = path_graph(1);
  Rng rng(5);
  const ScanSequence seq = h_dfs(hg, rng);
  CHECK(seq.n_valid == 1);
  CHECK(seq.order[0] == 0);
}

TEST_CASE("h_dfs is a permutation with sound break markers") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const TileBag bag = random_bag(seed, 1 + seed % 4, 2 + seed % 5);
    const Hypergraph hg = build_bag_hypergraph(bag, 2);
    Rng rng(seed * 13 + 1);
    const ScanSequence seq = h_dfs(hg, rng);
    check_sequence(hg, seq, false);
    CHECK(seq.n_valid == hg.n_nodes());  // exact cover
    CHECK(seq.window == hg.n_nodes());
    CHECK(seq.strategy == ScanStrategy::hdfs);
  }
}

TEST_CASE("h_arw walks the unique path when forced") {
  const Hypergraph hg = path_graph(3);
  bool saw_root0 = false;
  for (std::uint64_t seed = 0; seed < 64 && !saw_root0; ++seed) {
    Rng rng(seed);
    const ScanSequence seq = h_arw(hg, rng, 3);
    check_sequence(hg, seq, true);
    if (seq.order[0] == 0) {
      saw_root0 = true;
      CHECK(seq.n_valid == 3);
      CHECK(seq.order[1] == 1);
      CHECK(seq.order[2] == 2);
    }
  }
  CHECK(saw_root0);
}

TEST_CASE("h_arw pads after early termination on an isolated root") {
  Incidence inc;
  inc.n_nodes = 4;
  inc.edges = {{1, 2}};
  inc.kinds = {EdgeKind::rule};
  inc.weights = {1.0};
  const Hypergraph hg = compute_degrees(inc);
  bool saw_isolated_root = false;
  for (std::uint64_t seed = 0; seed < 64 && !saw_isolated_root; ++seed) {
    Rng rng(seed);
    const ScanSequence seq = h_arw(hg, rng, 4);
    if (seq.order[0] == 0 || seq.order[0] == 3) {
      saw_isolated_root = true;
      CHECK(seq.n_valid == 1);
      for (std::size_t p = 1; p < 4; ++p) CHECK(seq.valid[p] == 0);
    }
  }
  CHECK(saw_isolated_root);
}

TEST_CASE("h_arw obeys walk invariants on random hypergraphs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TileBag bag = random_bag(seed + 500, 2 + seed % 3, 2 + seed % 4);
    const Hypergraph hg = build_bag_hypergraph(bag, 2);
    const std::size_t t_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(0.7 * hg.n_nodes())));
    Rng rng(seed * 7 + 3);
    const ScanSequence seq = h_arw(hg, rng, t_len);
    check_sequence(hg, seq, true);
    CHECK(seq.n_valid <= t_len);
    CHECK(seq.window == t_len);
    CHECK(seq.strategy == ScanStrategy::harw);
    CHECK(seq.breaks.size() == 1);
  }
}

TEST_CASE("random_scan is a full shuffle flagged as all-breaks") {
  const TileBag bag = random_bag(9, 3, 3);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  Rng rng(11);
  const ScanSequence seq = random_scan(hg, rng);
  check_sequence(hg, seq, false);
  CHECK(seq.n_valid == 9);
  CHECK(seq.breaks.size() == 9);
  CHECK(seq.strategy == ScanStrategy::random);
}

TEST_CASE("build_scan_set splits m into ceil dfs + floor arw") {
  const TileBag bag = random_bag(13, 4, 5);
  const Hypergraph hg = build_bag_hypergraph(bag, 3);

  const ScanSet one = build_scan_set(hg, 1, 0.7, 42);
  REQUIRE(one.seqs.size() == 1);
  CHECK(one.seqs[0].strategy == ScanStrategy::hdfs);
  // A single H-DFS covers every node exactly once.
  for (const auto& sites : one.membership) CHECK(sites.size() == 1);

  const ScanSet five = build_scan_set(hg, 5, 0.7, 43);
  REQUIRE(five.seqs.size() == 5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(five.seqs[i].strategy == ScanStrategy::hdfs);
  }
  for (std::size_t i = 3; i < 5; ++i) {
    CHECK(five.seqs[i].strategy == ScanStrategy::harw);
  }
}

TEST_CASE("m=8 on 20 nodes gives every node at least 4 membership entries") {
  const TileBag bag = random_bag(17, 4, 5);
  const Hypergraph hg = build_bag_hypergraph(bag, 3);
  REQUIRE(hg.n_nodes() == 20);
  const ScanSet scans = build_scan_set(hg, 8, 0.7, 7);
  REQUIRE(scans.seqs.size() == 8);
  for (const auto& sites : scans.membership) CHECK(sites.size() >= 4);
}

TEST_CASE("membership index round-trips against the sequences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TileBag bag = random_bag(seed + 40, 3, 4);
    const Hypergraph hg = build_bag_hypergraph(bag, 2);
    const ScanSet scans = build_scan_set(hg, 4, 0.7, seed);

    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rebuilt(
        hg.n_nodes());
    for (std::uint32_t m = 0; m < scans.seqs.size(); ++m) {
      const ScanSequence& seq = scans.seqs[m];
      for (std::uint32_t p = 0; p < seq.n_valid; ++p) {
        rebuilt[seq.order[p]].push_back({m, p});
      }
    }
    CHECK(rebuilt == scans.membership);

    std::size_t tokens = 0, covered = 0;
    for (const auto& sites : rebuilt) {
      tokens += sites.size();
      covered += sites.empty() ? 0 : 1;
    }
    CHECK(scans.total_valid_tokens() == tokens);
    CHECK(scans.covered_nodes() == covered);
  }
}

TEST_CASE("same seed reproduces an identical scan set") {
  const TileBag bag = random_bag(23, 3, 5);
  const Hypergraph hg = build_bag_hypergraph(bag, 3);
  const ScanSet a = build_scan_set(hg, 6, 0.7, 99);
  const ScanSet b = build_scan_set(hg, 6, 0.7, 99);
  REQUIRE(a.seqs.size() == b.seqs.size());
  for (std::size_t i = 0; i < a.seqs.size(); ++i) {
    CHECK(a.seqs[i].order == b.seqs[i].order);
    CHECK(a.seqs[i].n_valid == b.seqs[i].n_valid);
    CHECK(a.seqs[i].breaks == b.seqs[i].breaks);
  }
  const ScanSet c = build_scan_set(hg, 6, 0.7, 100);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.seqs.size(); ++i) {
    any_diff = any_diff || a.seqs[i].order != c.seqs[i].order;
  }
  CHECK(any_diff);
}

TEST_CASE("single-kind strategies emit m sequences of that kind") {
  const TileBag bag = random_bag(29, 3, 4);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  const auto kinds = {ScanSetStrategy::hdfs, ScanSetStrategy::harw,
                      ScanSetStrategy::random};
  for (const ScanSetStrategy s : kinds) {
    const ScanSet scans = build_scan_set(hg, 3, 0.7, 5, s);
    REQUIRE(scans.seqs.size() == 3);
    for (const ScanSequence& seq : scans.seqs) {
      if (s == ScanSetStrategy::hdfs) CHECK(seq.strategy == ScanStrategy::hdfs);
      if (s == ScanSetStrategy::harw) CHECK(seq.strategy == ScanStrategy::harw);
      if (s == ScanSetStrategy::random) {
        CHECK(seq.strategy == ScanStrategy::random);
      }
    }
  }
}
