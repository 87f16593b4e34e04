#include "hgmamba/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hgmamba {

namespace {

std::uint64_t u(std::size_t v) { return static_cast<std::uint64_t>(v); }

}  // namespace

void grid_shape_for(std::size_t n, std::size_t* rows, std::size_t* cols) {
  if (n == 0) throw std::invalid_argument("grid_shape_for: n must be >= 1");
  std::size_t best = 1;
  for (std::size_t r = 1; r * r <= n; ++r) {
    if (n % r == 0) best = r;
  }
  *rows = best;
  *cols = n / best;
}

CostStats analytic_stats(const ModelConfig& cfg, std::size_t rows,
                         std::size_t cols) {
  cfg.validate();
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("analytic_stats: empty grid");
  }
  const std::size_t n = rows * cols;

  const std::size_t rule_edges = rows * (cols - 1) + (rows - 1) * cols;
  const std::size_t rule_nnz = 2 * rule_edges;
  const std::size_t sim_edges = n >= 2 ? n : 0;
  const std::size_t sim_members = n >= 2 ? std::min(cfg.top_k, n - 1) + 1 : 0;
  const std::size_t sim_nnz = sim_edges * sim_members;

  CostStats stats;
  stats.n_nodes = n;
  if (cfg.mode == ConvMode::rule_only) {
    stats.nnz_active = rule_nnz;
    stats.edges_active = rule_edges;
  } else {
    stats.nnz_active = rule_nnz + sim_nnz;
    stats.edges_active = rule_edges + sim_edges;
  }

  const std::size_t t_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.t_ratio * static_cast<double>(n))));
  std::size_t n_full = 0;
  std::size_t n_walk = 0;
  switch (cfg.scan_strategy) {
    case ScanSetStrategy::both:
      n_full = (cfg.m_sequences + 1) / 2;
      n_walk = cfg.m_sequences / 2;
      break;
    case ScanSetStrategy::hdfs:
    case ScanSetStrategy::random:
      n_full = cfg.m_sequences;
      break;
    case ScanSetStrategy::harw:
      n_walk = cfg.m_sequences;
      break;
  }

  LayerScanStats layer;
  for (std::size_t i = 0; i < n_full; ++i) layer.windows.push_back(n);
  for (std::size_t i = 0; i < n_walk; ++i) layer.windows.push_back(t_len);
  layer.valid_tokens = n_full * n + n_walk * t_len;
  layer.covered_nodes = n_full > 0 ? n : std::min(n, layer.valid_tokens);
  stats.layers.assign(cfg.n_layers, layer);
  return stats;
}

CostStats stats_from_run(const Hypergraph& hg, ConvMode mode,
                         const std::vector<ScanSet>& scans) {
  CostStats stats;
  stats.n_nodes = hg.n_nodes();
  if (mode == ConvMode::rule_only) {
    stats.nnz_active = hg.inc.nnz(EdgeKind::rule);
    stats.edges_active = hg.inc.edge_count(EdgeKind::rule);
  } else {
    stats.nnz_active = hg.inc.nnz();
    stats.edges_active = hg.inc.n_edges();
  }
  for (const ScanSet& set : scans) {
    LayerScanStats layer;
    for (const ScanSequence& seq : set.seqs) {
      layer.windows.push_back(seq.window);
    }
    layer.valid_tokens = set.total_valid_tokens();
    layer.covered_nodes = set.covered_nodes();
    stats.layers.push_back(std::move(layer));
  }
  return stats;
}

CostReport cost_model(const ModelConfig& cfg, const CostStats& stats) {
  cfg.validate();
  if (stats.n_nodes == 0) {
    throw std::invalid_argument("cost_model: n_nodes must be >= 1");
  }
  if (stats.layers.size() != cfg.n_layers) {
    throw std::invalid_argument("cost_model: layer stats count mismatch");
  }

  const std::uint64_t n = u(stats.n_nodes);
  const std::uint64_t d = u(cfg.d);
  const std::uint64_t ds = u(cfg.d_state);
  const std::uint64_t w = u(cfg.conv_width);

  CostReport report;
  report.cfg = cfg;
  report.n_tiles = stats.n_nodes;
  auto& comp = report.component;

  for (const LayerScanStats& layer : stats.layers) {
    comp[static_cast<int>(Component::hgconv)] +=
        hgconv_flops(n, d, d, u(stats.nnz_active), u(stats.edges_active));
    for (std::size_t win_s : layer.windows) {
      const std::uint64_t win = u(win_s);
      comp[static_cast<int>(Component::conv1d)] +=
          2 * conv1d_flops(win, d, w);
      comp[static_cast<int>(Component::selective_scan)] +=
          2 * selective_scan_flops(win, d, ds);
      comp[static_cast<int>(Component::merge_norm)] +=
          2 * layer_norm_flops(win, d) +
          residual_flops(win, d, cfg.residual_input);
    }
    comp[static_cast<int>(Component::aggregate)] +=
        aggregate_flops(u(layer.valid_tokens), u(layer.covered_nodes), d);
    comp[static_cast<int>(Component::merge_norm)] += merge_flops(n, d);
  }
  comp[static_cast<int>(Component::mil_head)] +=
      abmil_flops(n, d, u(cfg.attn_hidden)) +
      classify_flops(d, u(cfg.n_classes));

  report.total = 0;
  for (const std::uint64_t c : comp) report.total += c;

  // Bytes: parameters and peak simultaneous activations, both in doubles.
  std::uint64_t params = 0;
  {
    // Mirrors init_params shapes without materializing tensors.
    const std::uint64_t per_ssm = d * w + d      // conv kernel + bias
                                  + d * ds       // a_log
                                  + 2 * d        // delta_w + delta_b
                                  + 2 * (d * ds + ds)  // b/c proj + bias
                                  + d;           // d_skip
    const std::uint64_t per_block = d * d              // conv weight
                                    + 2 * per_ssm      // both directions
                                    + 4 * d            // branch norms
                                    + d * d + d        // merge linear
                                    + 2 * d;           // merge norm
    params = u(cfg.n_layers) * per_block;
    params += 2 * d * u(cfg.attn_hidden) + u(cfg.attn_hidden)  // att_v/u/w
              + d * u(cfg.n_classes) + u(cfg.n_classes);       // classifier
  }
  report.param_bytes = params * 8;

  {
    // Peak live tensors per stage of one layer's forward evaluation.
    std::uint64_t max_window = 0;
    std::uint64_t window_sum = 0;
    for (std::size_t win_s : stats.layers.front().windows) {
      max_window = std::max(max_window, u(win_s));
      window_sum += u(win_s);
    }
    const std::uint64_t hgconv_stage =
        (4 * n + u(stats.edges_active)) * d;  // x, xw, pre-relu, out, means
    const std::uint64_t scan_stage =
        (n + window_sum + 5 * max_window) * d;  // x1 + held outputs + branch
    const std::uint64_t merge_stage = 3 * n * d;  // agg, merged, normed
    const std::uint64_t mil_stage =
        n * d + 3 * n * u(cfg.attn_hidden) + d;  // z, gated paths, bag
    const std::uint64_t peak = std::max(
        {hgconv_stage, scan_stage, merge_stage, mil_stage});
    report.activation_bytes = peak * 8;
  }

  report.attention_flops = attention_cost(stats.n_nodes, cfg.d, cfg.n_layers);
  report.attention_activation_bytes = (n * n + 4 * n * d) * 8;
  return report;
}

std::uint64_t attention_cost(std::size_t n_s, std::size_t d_s,
                             std::size_t l_s) {
  if (n_s == 0 || d_s == 0 || l_s == 0) {
    throw std::invalid_argument("attention_cost: all arguments must be >= 1");
  }
  const std::uint64_t n = u(n_s);
  const std::uint64_t d = u(d_s);
  const std::uint64_t l = u(l_s);
  return l * (8 * n * d * d + 4 * n * n * d);
}

std::string render_cost_report(const CostReport& report) {
  std::ostringstream out;
  out << "n_tiles=" << report.n_tiles << "\n";
  out << "d=" << report.cfg.d << " n_layers=" << report.cfg.n_layers
      << " d_state=" << report.cfg.d_state << " m_sequences="
      << report.cfg.m_sequences << " top_k=" << report.cfg.top_k
      << " conv_width=" << report.cfg.conv_width << "\n";
  for (int c = 0; c < kComponentCount; ++c) {
    out << "flops." << component_name(static_cast<Component>(c)) << "="
        << report.component[static_cast<std::size_t>(c)] << "\n";
  }
  out << "flops.total=" << report.total << "\n";
  out << "param_bytes=" << report.param_bytes << "\n";
  out << "activation_bytes=" << report.activation_bytes << "\n";
  out << "attention.flops=" << report.attention_flops << "\n";
  out << "attention.activation_bytes=" << report.attention_activation_bytes
      << "\n";
  const double ratio = static_cast<double>(report.attention_flops) /
                       static_cast<double>(report.total);
  out << "attention_to_model_flops_ratio=" << ratio << "\n";
  return out.str();
}

}  // namespace hgmamba
