#include "hgmamba/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hgmamba/flops.hpp"
#include "hgmamba/rng.hpp"

namespace hgmamba {

namespace {

void add_into(Matrix* dst, const Matrix& src) {
  for (std::size_t r = 0; r < dst->rows(); ++r) {
    for (std::size_t c = 0; c < dst->cols(); ++c) (*dst)(r, c) += src(r, c);
  }
}

Matrix xavier(Rng& rng, std::size_t rows, std::size_t cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = (2.0 * rng.uniform() - 1.0) * a;
    }
  }
  return m;
}

Matrix uniform_pm(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }
  return m;
}

Matrix constant(std::size_t rows, std::size_t cols, double v) {
  Matrix m(rows, cols);
  m.fill(v);
  return m;
}

// Identity plus small uniform noise for the square mixing layers, so at init
// each block is close to a feature-preserving smoothing step and weak
// per-tile signals survive to the attention head.
Matrix identity_ish(Rng& rng, std::size_t d, double noise) {
  Matrix m = uniform_pm(rng, d, d, noise);
  for (std::size_t i = 0; i < d; ++i) m(i, i) += 1.0;
  return m;
}

SsmParams init_ssm(Rng& rng, std::size_t d, std::size_t ds, std::size_t w) {
  SsmParams p;
  const double conv_bound = std::sqrt(1.0 / static_cast<double>(w));
  p.conv_kernel = GradSlot(uniform_pm(rng, d, w, conv_bound));
  p.conv_bias = GradSlot(uniform_pm(rng, 1, d, conv_bound));
  // S4D-real style decay spectrum: a_log row = log(1..d_state).
  Matrix a_log(d, ds);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < ds; ++k) {
      a_log(c, k) = std::log(static_cast<double>(k + 1));
    }
  }
  p.a_log = GradSlot(std::move(a_log));
  p.delta_w = GradSlot(uniform_pm(rng, 1, d, 0.1));
  // softplus(delta_b) = 0.01: the recurrence starts near the identity.
  p.delta_b = GradSlot(constant(1, d, std::log(std::expm1(0.01))));
  p.b_proj = GradSlot(xavier(rng, d, ds));
  p.b_bias = GradSlot(Matrix(1, ds));
  p.c_proj = GradSlot(xavier(rng, d, ds));
  p.c_bias = GradSlot(Matrix(1, ds));
  p.d_skip = GradSlot(constant(1, d, 1.0));
  return p;
}

void accumulate_ssm(SsmParams& p, const SsmGrads& g) {
  add_into(&p.conv_kernel.grad, g.conv_kernel);
  add_into(&p.conv_bias.grad, g.conv_bias);
  add_into(&p.a_log.grad, g.a_log);
  add_into(&p.delta_w.grad, g.delta_w);
  add_into(&p.delta_b.grad, g.delta_b);
  add_into(&p.b_proj.grad, g.b_proj);
  add_into(&p.b_bias.grad, g.b_bias);
  add_into(&p.c_proj.grad, g.c_proj);
  add_into(&p.c_bias.grad, g.c_bias);
  add_into(&p.d_skip.grad, g.d_skip);
}

void visit_ssm(const std::string& prefix, SsmParams& p,
               const std::function<void(const std::string&, GradSlot&)>& fn) {
  fn(prefix + ".conv_kernel", p.conv_kernel);
  fn(prefix + ".conv_bias", p.conv_bias);
  fn(prefix + ".a_log", p.a_log);
  fn(prefix + ".delta_w", p.delta_w);
  fn(prefix + ".delta_b", p.delta_b);
  fn(prefix + ".b_proj", p.b_proj);
  fn(prefix + ".b_bias", p.b_bias);
  fn(prefix + ".c_proj", p.c_proj);
  fn(prefix + ".c_bias", p.c_bias);
  fn(prefix + ".d_skip", p.d_skip);
}

// Scales upstream node grads by the grad_scale once, at the top.
Matrix scaled(const Matrix& m, double s) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= s;
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (d < 1) throw std::invalid_argument("config: d must be >= 1");
  if (n_layers < 1) throw std::invalid_argument("config: n_layers must be >= 1");
  if (d_state < 1) throw std::invalid_argument("config: d_state must be >= 1");
  if (m_sequences < 1) {
    throw std::invalid_argument("config: m_sequences must be >= 1");
  }
  if (top_k < 1) throw std::invalid_argument("config: top_k must be >= 1");
  if (!(t_ratio > 0.0 && t_ratio <= 1.0)) {
    throw std::invalid_argument("config: t_ratio must be in (0, 1]");
  }
  if (conv_width < 1) {
    throw std::invalid_argument("config: conv_width must be >= 1");
  }
  if (n_classes < 2) {
    throw std::invalid_argument("config: n_classes must be >= 2");
  }
  if (attn_hidden < 1) {
    throw std::invalid_argument("config: attn_hidden must be >= 1");
  }
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, "init", 0));
  ModelParams params;
  params.blocks.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    BlockParams b;
    b.conv.weight = GradSlot(identity_ish(rng, cfg.d, 0.1));
    b.ssm.fwd = init_ssm(rng, cfg.d, cfg.d_state, cfg.conv_width);
    b.ssm.bwd = init_ssm(rng, cfg.d, cfg.d_state, cfg.conv_width);
    b.ssm.norm_f_gain = GradSlot(constant(1, cfg.d, 1.0));
    b.ssm.norm_f_bias = GradSlot(Matrix(1, cfg.d));
    b.ssm.norm_b_gain = GradSlot(constant(1, cfg.d, 1.0));
    b.ssm.norm_b_bias = GradSlot(Matrix(1, cfg.d));
    b.merge_w = GradSlot(identity_ish(rng, cfg.d, 0.1));
    b.merge_b = GradSlot(Matrix(1, cfg.d));
    b.merge_gain = GradSlot(constant(1, cfg.d, 1.0));
    b.merge_bias = GradSlot(Matrix(1, cfg.d));
    params.blocks.push_back(std::move(b));
  }
  params.mil.att_v = GradSlot(xavier(rng, cfg.d, cfg.attn_hidden));
  params.mil.att_u = GradSlot(xavier(rng, cfg.d, cfg.attn_hidden));
  params.mil.att_w = GradSlot(xavier(rng, cfg.attn_hidden, 1));
  params.mil.cls_w = GradSlot(xavier(rng, cfg.d, cfg.n_classes));
  params.mil.cls_b = GradSlot(Matrix(1, cfg.n_classes));
  return params;
}

void visit_params(ModelParams& params,
                  const std::function<void(const std::string&, GradSlot&)>& fn) {
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    BlockParams& b = params.blocks[l];
    const std::string p = "block" + std::to_string(l);
    fn(p + ".conv.weight", b.conv.weight);
    visit_ssm(p + ".fwd", b.ssm.fwd, fn);
    visit_ssm(p + ".bwd", b.ssm.bwd, fn);
    fn(p + ".norm_f_gain", b.ssm.norm_f_gain);
    fn(p + ".norm_f_bias", b.ssm.norm_f_bias);
    fn(p + ".norm_b_gain", b.ssm.norm_b_gain);
    fn(p + ".norm_b_bias", b.ssm.norm_b_bias);
    fn(p + ".merge_w", b.merge_w);
    fn(p + ".merge_b", b.merge_b);
    fn(p + ".merge_gain", b.merge_gain);
    fn(p + ".merge_bias", b.merge_bias);
  }
  fn("mil.att_v", params.mil.att_v);
  fn("mil.att_u", params.mil.att_u);
  fn("mil.att_w", params.mil.att_w);
  fn("mil.cls_w", params.mil.cls_w);
  fn("mil.cls_b", params.mil.cls_b);
}

std::size_t parameter_count(const ModelConfig& cfg) {
  ModelParams p = init_params(cfg, 0);
  std::size_t n = 0;
  visit_params(p, [&n](const std::string&, GradSlot& slot) {
    n += slot.value.size();
  });
  return n;
}

Hypergraph build_bag_hypergraph(const TileBag& bag, std::size_t top_k) {
  Incidence rule = build_rule_adjacency(bag);
  Incidence sim = build_similarity_hyperedges(bag, top_k);
  return compute_degrees(unify(rule, sim));
}

std::vector<ScanSet> draw_scan_sets(const Hypergraph& hg,
                                    const ModelConfig& cfg,
                                    std::uint64_t seed) {
  std::vector<ScanSet> scans;
  scans.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    scans.push_back(build_scan_set(hg, cfg.m_sequences, cfg.t_ratio,
                                   derive_seed(seed, "scan.layer", l),
                                   cfg.scan_strategy));
  }
  return scans;
}

Matrix gather_window(const Matrix& x1, const ScanSequence& seq) {
  Matrix w(seq.window, x1.cols());
  for (std::size_t p = 0; p < seq.n_valid; ++p) {
    const std::size_t node = seq.order[p];
    for (std::size_t c = 0; c < x1.cols(); ++c) w(p, c) = x1(node, c);
  }
  return w;
}

namespace {

Matrix block_forward(const Hypergraph& hg, const Matrix& x,
                     const ModelConfig& cfg, BlockParams& bp,
                     const ScanSet& scans, BlockCache* cache) {
  bp.conv.edge_weights.assign(hg.inc.n_edges(), 1.0);
  Matrix x1 = hgconv_forward(hg, x, bp.conv, cfg.mode,
                             cache != nullptr ? &cache->conv : nullptr);

  std::vector<Matrix> outputs;
  outputs.reserve(scans.seqs.size());
  if (cache != nullptr) cache->ssm.resize(scans.seqs.size());
  for (std::size_t m = 0; m < scans.seqs.size(); ++m) {
    Matrix win = gather_window(x1, scans.seqs[m]);
    outputs.push_back(bi_ssm_forward(
        win, scans.seqs[m].n_valid, bp.ssm, cfg.residual_input,
        cache != nullptr ? &cache->ssm[m] : nullptr));
  }

  Matrix agg = aggregate_tokens(outputs, scans, x1);

  Matrix out;
  {
    ComponentScope scope(Component::merge_norm);
    Matrix merged = matmul(agg, bp.merge_w.value);
    add_flops(static_cast<std::uint64_t>(merged.rows()) * merged.cols());
    for (std::size_t r = 0; r < merged.rows(); ++r) {
      for (std::size_t c = 0; c < merged.cols(); ++c) {
        merged(r, c) += bp.merge_b.value(0, c);
      }
    }
    out = layer_norm(merged, bp.merge_gain.value, bp.merge_bias.value,
                     kLayerNormEps,
                     cache != nullptr ? &cache->merge_ln : nullptr);
  }

  if (cache != nullptr) {
    cache->x1 = std::move(x1);
    cache->agg = std::move(agg);
  }
  return out;
}

// Returns the gradient w.r.t. the block input; accumulates parameter grads.
Matrix block_backward(const Hypergraph& hg, BlockParams& bp,
                      const ScanSet& scans, const BlockCache& cache,
                      const Matrix& g_out) {
  LayerNormGrads lng = layer_norm_backward(g_out, cache.merge_ln,
                                           bp.merge_gain.value);
  add_into(&bp.merge_gain.grad, lng.gain);
  add_into(&bp.merge_bias.grad, lng.bias);
  add_into(&bp.merge_b.grad, column_sums(lng.x));
  add_into(&bp.merge_w.grad, matmul(transpose(cache.agg), lng.x));
  Matrix g_agg = matmul(lng.x, transpose(bp.merge_w.value));

  std::vector<Matrix> g_outputs;
  Matrix g_x1(cache.x1.rows(), cache.x1.cols());
  aggregate_tokens_backward(g_agg, scans, &g_outputs, &g_x1);

  for (std::size_t m = 0; m < scans.seqs.size(); ++m) {
    BiSsmGrads bg = bi_ssm_backward(g_outputs[m], cache.ssm[m], bp.ssm);
    accumulate_ssm(bp.ssm.fwd, bg.fwd);
    accumulate_ssm(bp.ssm.bwd, bg.bwd);
    add_into(&bp.ssm.norm_f_gain.grad, bg.norm_f_gain);
    add_into(&bp.ssm.norm_f_bias.grad, bg.norm_f_bias);
    add_into(&bp.ssm.norm_b_gain.grad, bg.norm_b_gain);
    add_into(&bp.ssm.norm_b_bias.grad, bg.norm_b_bias);
    const ScanSequence& seq = scans.seqs[m];
    for (std::size_t p = 0; p < seq.n_valid; ++p) {
      const std::size_t node = seq.order[p];
      for (std::size_t c = 0; c < g_x1.cols(); ++c) {
        g_x1(node, c) += bg.seq(p, c);
      }
    }
  }

  HGConvGrads hg_grads = hgconv_backward(hg, bp.conv, cache.conv, g_x1);
  add_into(&bp.conv.weight.grad, hg_grads.weight);
  // Edge weights stay frozen at 1; their gradient is intentionally dropped.
  return std::move(hg_grads.x);
}

}  // namespace

Matrix model_forward(const TileBag& bag, const ModelConfig& cfg,
                     ModelParams& params, const Hypergraph& hg,
                     const std::vector<ScanSet>& scans, ModelCache* cache) {
  cfg.validate();
  if (bag.size() == 0) throw std::invalid_argument("model_forward: empty bag");
  if (bag.features.cols() != cfg.d) {
    throw std::invalid_argument(
        "model_forward: feature dim != model width d");
  }
  if (params.blocks.size() != cfg.n_layers || scans.size() != cfg.n_layers) {
    throw std::invalid_argument(
        "model_forward: layer count mismatch between config, params, scans");
  }

  if (cache != nullptr) cache->blocks.resize(cfg.n_layers);
  Matrix x = bag.features;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    x = block_forward(hg, x, cfg, params.blocks[l], scans[l],
                      cache != nullptr ? &cache->blocks[l] : nullptr);
  }
  return mil_forward(x, params.mil, cache != nullptr ? &cache->mil : nullptr);
}

Matrix model_forward_seeded(const TileBag& bag, const ModelConfig& cfg,
                            ModelParams& params, std::uint64_t seed,
                            ModelCache* cache) {
  const Hypergraph hg = build_bag_hypergraph(bag, cfg.top_k);
  const std::vector<ScanSet> scans = draw_scan_sets(hg, cfg, seed);
  return model_forward(bag, cfg, params, hg, scans, cache);
}

double model_loss_and_backward(const TileBag& bag, const ModelConfig& cfg,
                               ModelParams& params, const Hypergraph& hg,
                               const std::vector<ScanSet>& scans,
                               double grad_scale) {
  ModelCache cache;
  Matrix logits = model_forward(bag, cfg, params, hg, scans, &cache);
  Matrix g_logits;
  const double loss = cross_entropy(logits, bag.label, &g_logits);

  MilGrads mil_grads = make_mil_grads(params.mil);
  Matrix gz = mil_backward(scaled(g_logits, grad_scale), cache.mil,
                           params.mil, &mil_grads);
  add_into(&params.mil.att_v.grad, mil_grads.att_v);
  add_into(&params.mil.att_u.grad, mil_grads.att_u);
  add_into(&params.mil.att_w.grad, mil_grads.att_w);
  add_into(&params.mil.cls_w.grad, mil_grads.cls_w);
  add_into(&params.mil.cls_b.grad, mil_grads.cls_b);

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    gz = block_backward(hg, params.blocks[l], scans[l], cache.blocks[l], gz);
  }
  return loss;
}

}  // namespace hgmamba
