#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hgmamba/bissm.hpp"
#include "hgmamba/hgconv.hpp"
#include "hgmamba/hypergraph.hpp"
#include "hgmamba/milhead.hpp"
#include "hgmamba/scanner.hpp"

namespace hgmamba {

struct ModelConfig {
  std::size_t d = 512;         // model width; must equal the feature dim
  std::size_t n_layers = 2;    // stacked blocks
  std::size_t d_state = 16;    // SSM state width
  std::size_t m_sequences = 8; // scan sequences per layer
  std::size_t top_k = 3;       // similarity neighbors per anchor
  double t_ratio = 0.7;        // walk length fraction for H-ARW
  std::size_t conv_width = 4;  // causal conv taps
  ConvMode mode = ConvMode::hypergraph;
  std::size_t n_classes = 2;
  bool residual_input = true;  // include block input in the branch sum
  std::size_t attn_hidden = 128;
  ScanSetStrategy scan_strategy = ScanSetStrategy::both;

  void validate() const;  // throws std::invalid_argument on bad fields
};

// One block: hypergraph conv -> M scanned Bi-SSM sequences -> token
// aggregation -> one merge linear + layer norm over the node axis.
struct BlockParams {
  HGConvParams conv;
  BiSsmParams ssm;
  GradSlot merge_w;     // d x d
  GradSlot merge_b;     // 1 x d
  GradSlot merge_gain;  // 1 x d
  GradSlot merge_bias;  // 1 x d
};

struct ModelParams {
  std::vector<BlockParams> blocks;
  MilParams mil;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Applies fn to every trainable tensor in a fixed documented order with a
// stable dotted name; the ordering contract backs Adam state, checkpoints,
// and the gradient-check sweep.
void visit_params(ModelParams& params,
                  const std::function<void(const std::string&, GradSlot&)>& fn);

std::size_t parameter_count(const ModelConfig& cfg);

struct BlockCache {
  HGConvCache conv;
  Matrix x1;  // hgconv output (gather source and aggregation fallback)
  std::vector<BiSsmCache> ssm;
  Matrix agg;  // aggregated node features entering the merge
  LayerNormCache merge_ln;
};

struct ModelCache {
  std::vector<BlockCache> blocks;
  MilCache mil;
};

// Unified rule + similarity hypergraph of a bag.
Hypergraph build_bag_hypergraph(const TileBag& bag, std::size_t top_k);

// One scan set per layer, sub-seeded per layer index from `seed`.
std::vector<ScanSet> draw_scan_sets(const Hypergraph& hg,
                                    const ModelConfig& cfg,
                                    std::uint64_t seed);

// Window rows [0, n_valid) hold x1[order[p]]; the rest are zero padding.
Matrix gather_window(const Matrix& x1, const ScanSequence& seq);

// Forward with caller-provided scan sets (training, gradient checks, and
// cost instrumentation all need to pin the sampled sequences).
// Non-const params: per-bag edge weights (frozen at 1) are sized in place.
Matrix model_forward(const TileBag& bag, const ModelConfig& cfg,
                     ModelParams& params, const Hypergraph& hg,
                     const std::vector<ScanSet>& scans, ModelCache* cache);

// Convenience wrapper: builds the hypergraph, draws per-layer scan sets from
// `seed`, runs the forward.
Matrix model_forward_seeded(const TileBag& bag, const ModelConfig& cfg,
                            ModelParams& params, std::uint64_t seed,
                            ModelCache* cache = nullptr);

// Cross-entropy loss for the bag plus a full backward pass; gradients are
// scaled by grad_scale and accumulated into params' grad slots.
double model_loss_and_backward(const TileBag& bag, const ModelConfig& cfg,
                               ModelParams& params, const Hypergraph& hg,
                               const std::vector<ScanSet>& scans,
                               double grad_scale);

}  // namespace hgmamba
