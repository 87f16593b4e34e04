#include "hgmamba/scanner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hgmamba/flops.hpp"

namespace hgmamba {
namespace {

// Sorted unique unvisited co-members of v across its incident hyperedges.
std::vector<std::uint32_t> unvisited_neighbors(
    const Hypergraph& hg, std::uint32_t v,
    const std::vector<std::uint8_t>& visited) {
  std::vector<std::uint32_t> out;
  for (const std::uint32_t e : hg.node_edges[v])
    for (const std::uint32_t u : hg.inc.edges[e])
      if (!visited[u]) out.push_back(u);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool share_edge(const Hypergraph& hg, std::uint32_t a, std::uint32_t b) {
  for (const std::uint32_t e : hg.node_edges[a])
    for (const std::uint32_t u : hg.inc.edges[e])
      if (u == b) return true;
  return false;
}

std::uint32_t draw_unvisited(const std::vector<std::uint8_t>& visited,
                             std::size_t remaining, Rng& rng) {
  std::size_t pick = static_cast<std::size_t>(rng.uniform_below(remaining));
  for (std::uint32_t v = 0; v < visited.size(); ++v) {
    if (visited[v]) continue;
    if (pick == 0) return v;
    --pick;
  }
  throw std::logic_error("draw_unvisited: remaining count out of sync");
}

}  // namespace

std::size_t ScanSet::total_valid_tokens() const {
  std::size_t t = 0;
  for (const auto& s : seqs) t += s.n_valid;
  return t;
}

std::size_t ScanSet::covered_nodes() const {
  std::size_t c = 0;
  for (const auto& sites : membership)
    if (!sites.empty()) ++c;
  return c;
}

ScanSequence h_dfs(const Hypergraph& hg, Rng& rng) {
  const std::size_t n = hg.n_nodes();
  if (n == 0) throw std::invalid_argument("h_dfs: empty hypergraph");
  ScanSequence seq;
  seq.order.reserve(n);
  seq.valid.assign(n, 1);
  seq.n_valid = n;
  seq.window = n;
  seq.strategy = ScanStrategy::hdfs;

  std::vector<std::uint8_t> visited(n, 0);
  std::vector<std::uint32_t> stack;
  std::size_t remaining = n;
  bool have_prev = false;
  std::uint32_t prev = 0;

  while (remaining > 0) {
    if (stack.empty()) stack.push_back(draw_unvisited(visited, remaining, rng));
    const std::uint32_t v = stack.back();
    stack.pop_back();
    if (visited[v]) continue;
    visited[v] = 1;
    --remaining;
    // A position is a break unless reached through a shared hyperedge.
    if (!have_prev || !share_edge(hg, prev, v))
      seq.breaks.push_back(static_cast<std::uint32_t>(seq.order.size()));
    seq.order.push_back(v);
    prev = v;
    have_prev = true;

    std::vector<std::uint32_t> next = unvisited_neighbors(hg, v, visited);
    rng.shuffle(next);
    for (const std::uint32_t u : next) stack.push_back(u);
  }
  return seq;
}

ScanSequence h_arw(const Hypergraph& hg, Rng& rng, std::size_t t_len) {
  const std::size_t n = hg.n_nodes();
  if (n == 0) throw std::invalid_argument("h_arw: empty hypergraph");
  if (t_len == 0 || t_len > n)
    throw std::invalid_argument("h_arw: t_len must be in [1, N]");
  ScanSequence seq;
  seq.order.assign(n, 0);
  seq.valid.assign(n, 0);
  seq.window = t_len;
  seq.strategy = ScanStrategy::harw;
  seq.breaks.push_back(0);

  std::vector<std::uint8_t> visited(n, 0);
  std::uint32_t cur =
      static_cast<std::uint32_t>(rng.uniform_below(static_cast<std::uint64_t>(n)));
  visited[cur] = 1;
  seq.order[0] = cur;
  seq.valid[0] = 1;
  std::size_t len = 1;
  while (len < t_len) {
    const std::vector<std::uint32_t> cand = unvisited_neighbors(hg, cur, visited);
    if (cand.empty()) break;  // walk terminates; suffix stays padding
    cur = cand[static_cast<std::size_t>(rng.uniform_below(cand.size()))];
    visited[cur] = 1;
    seq.order[len] = cur;
    seq.valid[len] = 1;
    ++len;
  }
  seq.n_valid = len;
  return seq;
}

ScanSequence random_scan(const Hypergraph& hg, Rng& rng) {
  const std::size_t n = hg.n_nodes();
  if (n == 0) throw std::invalid_argument("random_scan: empty hypergraph");
  ScanSequence seq;
  seq.order.resize(n);
  for (std::uint32_t v = 0; v < n; ++v) seq.order[v] = v;
  rng.shuffle(seq.order);
  seq.valid.assign(n, 1);
  seq.n_valid = n;
  seq.window = n;
  seq.strategy = ScanStrategy::random;
  seq.breaks.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) seq.breaks[i] = i;
  return seq;
}

ScanSet build_scan_set(const Hypergraph& hg, std::size_t m, double t_ratio,
                       std::uint64_t seed, ScanSetStrategy strategy) {
  if (m == 0) throw std::invalid_argument("build_scan_set: m must be >= 1");
  if (!(t_ratio > 0.0) || t_ratio > 1.0)
    throw std::invalid_argument("build_scan_set: t_ratio must be in (0, 1]");
  const std::size_t n = hg.n_nodes();
  const std::size_t t_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(t_ratio * static_cast<double>(n))));

  ComponentScope scope(Component::scan_gen);
  ScanSet set;
  set.seqs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    ScanStrategy kind;
    switch (strategy) {
      case ScanSetStrategy::both:
        kind = i < (m + 1) / 2 ? ScanStrategy::hdfs : ScanStrategy::harw;
        break;
      case ScanSetStrategy::hdfs: kind = ScanStrategy::hdfs; break;
      case ScanSetStrategy::harw: kind = ScanStrategy::harw; break;
      case ScanSetStrategy::random: kind = ScanStrategy::random; break;
      default: throw std::logic_error("build_scan_set: bad strategy");
    }
    Rng sub(derive_seed(seed, kind == ScanStrategy::hdfs   ? "scan.hdfs"
                              : kind == ScanStrategy::harw ? "scan.harw"
                                                           : "scan.random",
                        i));
    switch (kind) {
      case ScanStrategy::hdfs: set.seqs.push_back(h_dfs(hg, sub)); break;
      case ScanStrategy::harw: set.seqs.push_back(h_arw(hg, sub, t_len)); break;
      case ScanStrategy::random: set.seqs.push_back(random_scan(hg, sub)); break;
    }
  }

  set.membership.assign(n, {});
  for (std::uint32_t s = 0; s < set.seqs.size(); ++s) {
    const ScanSequence& seq = set.seqs[s];
    for (std::uint32_t p = 0; p < seq.n_valid; ++p)
      set.membership[seq.order[p]].emplace_back(s, p);
  }
  return set;
}

}  // namespace hgmamba
