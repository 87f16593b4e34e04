#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hgmamba/flops.hpp"
#include "hgmamba/model.hpp"

namespace hgmamba {

// Structural quantities the analytic cost model composes over. Two sources:
// analytic_stats derives them from a grid shape (planning / bench mode,
// assuming full-length walks), and stats_from_run extracts them from a real
// hypergraph + scan sets (exact mode, used to cross-check the instrumented
// kernel counters integer-for-integer).
struct LayerScanStats {
  std::vector<std::size_t> windows;  // per-sequence processing length
  std::size_t valid_tokens = 0;      // sum of valid prefix lengths
  std::size_t covered_nodes = 0;     // nodes with >= 1 membership entry
};

struct CostStats {
  std::size_t n_nodes = 0;
  std::size_t nnz_active = 0;    // incidence entries under the conv mode
  std::size_t edges_active = 0;  // hyperedges under the conv mode
  std::vector<LayerScanStats> layers;
};

// Grid-derived stats: rows x cols tiles, every walk assumed full length,
// every node assumed covered (exact whenever a full-cover sequence exists).
CostStats analytic_stats(const ModelConfig& cfg, std::size_t rows,
                         std::size_t cols);

// Splits n into the most square rows x cols factorization (largest divisor
// <= sqrt(n)); primes degenerate to a 1 x n strip.
void grid_shape_for(std::size_t n, std::size_t* rows, std::size_t* cols);

CostStats stats_from_run(const Hypergraph& hg, ConvMode mode,
                         const std::vector<ScanSet>& scans);

struct CostReport {
  ModelConfig cfg;
  std::size_t n_tiles = 0;
  std::array<std::uint64_t, kComponentCount> component{};
  std::uint64_t total = 0;
  std::uint64_t param_bytes = 0;
  std::uint64_t activation_bytes = 0;  // peak live tensors, forward pass
  std::uint64_t attention_flops = 0;   // comparator baseline
  std::uint64_t attention_activation_bytes = 0;
};

// Composes the per-kernel FLOP formulas over the pipeline structure. The
// result matches the instrumented counters exactly when stats come from
// stats_from_run on the same structures.
CostReport cost_model(const ModelConfig& cfg, const CostStats& stats);

// L * (8*N*d^2 + 4*N^2*d): QKV + output projections plus score and value
// products at 2 FLOPs per multiply-add.
std::uint64_t attention_cost(std::size_t n, std::size_t d, std::size_t l);

std::string render_cost_report(const CostReport& report);

}  // namespace hgmamba
