#include "hgmamba/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "hgmamba/bissm.hpp"
#include "hgmamba/hgconv.hpp"
#include "hgmamba/milhead.hpp"
#include "hgmamba/model.hpp"
#include "hgmamba/rng.hpp"
#include "hgmamba/training.hpp"

namespace hgmamba {

namespace {

constexpr double kTol = 1e-4;
constexpr double kStep = 1e-5;

void record(std::vector<GradCheckResult>& out, const std::string& name,
            const Matrix& analytic, const Matrix& fd) {
  GradCheckResult r;
  r.name = name;
  r.rel_err = relative_error(analytic, fd);
  r.tol = kTol;
  r.pass = r.rel_err < kTol;
  out.push_back(std::move(r));
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                     double scale = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Loss projection restricted to the valid prefix so the scalar only reads
// rows the kernels are allowed to populate.
Matrix masked_projection(Rng& rng, std::size_t rows, std::size_t cols,
                         std::size_t n_valid) {
  Matrix r = random_matrix(rng, rows, cols);
  for (std::size_t i = n_valid; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) r(i, j) = 0.0;
  }
  return r;
}

double dot_loss(const Matrix& out, const Matrix& proj) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    s += out.raw()[i] * proj.raw()[i];
  }
  return s;
}

TileBag random_bag(std::size_t rows, std::size_t cols, std::size_t dim,
                   int label, std::uint64_t seed) {
  Rng rng(seed);
  TileBag bag;
  bag.id = "gradcheck";
  bag.label = label;
  bag.features = random_matrix(rng, rows * cols, dim);
  bag.coords.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      bag.coords.push_back({static_cast<std::int32_t>(r),
                            static_cast<std::int32_t>(c)});
    }
  }
  return bag;
}

SsmParams random_ssm(Rng& rng, std::size_t d, std::size_t ds,
                     std::size_t w) {
  SsmParams p{GradSlot(random_matrix(rng, d, w, 0.5)),
              GradSlot(random_matrix(rng, 1, d, 0.2)),
              GradSlot(Matrix(d, ds)),
              GradSlot(random_matrix(rng, 1, d, 0.3)),
              GradSlot(random_matrix(rng, 1, d, 0.3)),
              GradSlot(random_matrix(rng, d, ds, 0.5)),
              GradSlot(random_matrix(rng, 1, ds, 0.1)),
              GradSlot(random_matrix(rng, d, ds, 0.5)),
              GradSlot(random_matrix(rng, 1, ds, 0.1)),
              GradSlot(random_matrix(rng, 1, d))};
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < ds; ++k) {
      p.a_log.value(i, k) = std::log(0.5 + 1.5 * rng.uniform());
    }
  }
  return p;
}

std::vector<std::pair<std::string, GradSlot*>> ssm_slots(SsmParams& p,
                                                         std::string pre) {
  return {{pre + ".conv_kernel", &p.conv_kernel},
          {pre + ".conv_bias", &p.conv_bias},
          {pre + ".a_log", &p.a_log},
          {pre + ".delta_w", &p.delta_w},
          {pre + ".delta_b", &p.delta_b},
          {pre + ".b_proj", &p.b_proj},
          {pre + ".b_bias", &p.b_bias},
          {pre + ".c_proj", &p.c_proj},
          {pre + ".c_bias", &p.c_bias},
          {pre + ".d_skip", &p.d_skip}};
}

const Matrix& ssm_grad_of(const SsmGrads& g, const std::string& leaf) {
  if (leaf == "conv_kernel") return g.conv_kernel;
  if (leaf == "conv_bias") return g.conv_bias;
  if (leaf == "a_log") return g.a_log;
  if (leaf == "delta_w") return g.delta_w;
  if (leaf == "delta_b") return g.delta_b;
  if (leaf == "b_proj") return g.b_proj;
  if (leaf == "b_bias") return g.b_bias;
  if (leaf == "c_proj") return g.c_proj;
  if (leaf == "c_bias") return g.c_bias;
  if (leaf == "d_skip") return g.d_skip;
  throw std::logic_error("unknown ssm grad leaf " + leaf);
}

// FD over an arbitrary tensor reached through a mutable pointer while the
// loss closure re-runs the forward.
Matrix fd_tensor(Matrix& target, const std::function<double()>& loss) {
  Matrix grad(target.rows(), target.cols());
  for (std::size_t i = 0; i < target.rows(); ++i) {
    for (std::size_t j = 0; j < target.cols(); ++j) {
      const double orig = target(i, j);
      target(i, j) = orig + kStep;
      const double fp = loss();
      target(i, j) = orig - kStep;
      const double fm = loss();
      target(i, j) = orig;
      grad(i, j) = (fp - fm) / (2.0 * kStep);
    }
  }
  return grad;
}

void check_hgconv(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  const TileBag bag = random_bag(2, 3, 5, 0, seed);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  Rng rng(seed + 1);
  HGConvParams params{GradSlot(random_matrix(rng, 5, 4, 0.6)), {}};
  params.edge_weights.assign(hg.inc.n_edges(), 1.0);
  for (double& w : params.edge_weights) w = 0.5 + rng.uniform();
  const Matrix proj = random_matrix(rng, bag.size(), 4);

  for (const ConvMode mode : {ConvMode::hypergraph, ConvMode::rule_only}) {
    const std::string tag =
        mode == ConvMode::hypergraph ? "hgconv" : "hgconv.rule_only";
    HGConvCache cache;
    hgconv_forward(hg, bag.features, params, mode, &cache);
    const HGConvGrads grads = hgconv_backward(hg, params, cache, proj);

    Matrix x = bag.features;
    const auto loss_x = [&]() {
      return dot_loss(hgconv_forward(hg, x, params, mode, nullptr), proj);
    };
    record(out, tag + ".x", grads.x, fd_tensor(x, loss_x));

    const auto loss_w = [&]() {
      return dot_loss(hgconv_forward(hg, bag.features, params, mode, nullptr),
                      proj);
    };
    record(out, tag + ".weight", grads.weight,
           fd_tensor(params.weight.value, loss_w));

    Matrix ew(1, params.edge_weights.size());
    for (std::size_t e = 0; e < params.edge_weights.size(); ++e) {
      ew(0, e) = params.edge_weights[e];
    }
    Matrix analytic_ew(1, grads.edge_weights.size());
    for (std::size_t e = 0; e < grads.edge_weights.size(); ++e) {
      analytic_ew(0, e) = grads.edge_weights[e];
    }
    const auto loss_ew = [&]() {
      for (std::size_t e = 0; e < params.edge_weights.size(); ++e) {
        params.edge_weights[e] = ew(0, e);
      }
      return dot_loss(hgconv_forward(hg, bag.features, params, mode, nullptr),
                      proj);
    };
    const Matrix fd_ew = fd_tensor(ew, loss_ew);
    for (std::size_t e = 0; e < params.edge_weights.size(); ++e) {
      params.edge_weights[e] = ew(0, e);
    }
    record(out, tag + ".edge_weights", analytic_ew, fd_ew);
  }
}

void check_conv1d(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t win = 7, d = 5, w = 4, n_valid = 5;
  Matrix x = masked_projection(rng, win, d, n_valid);
  Matrix kernel = random_matrix(rng, d, w, 0.5);
  Matrix bias = random_matrix(rng, 1, d, 0.2);
  const Matrix proj = masked_projection(rng, win, d, n_valid);

  ConvCache cache;
  causal_conv1d(x, n_valid, kernel, bias, &cache);
  Matrix g_kernel(d, w), g_bias(1, d);
  const Matrix gx = causal_conv1d_backward(proj, cache, kernel, &g_kernel,
                                           &g_bias);

  const auto loss = [&]() {
    return dot_loss(causal_conv1d(x, n_valid, kernel, bias, nullptr), proj);
  };
  record(out, "conv1d.x", gx, fd_tensor(x, loss));
  record(out, "conv1d.kernel", g_kernel, fd_tensor(kernel, loss));
  record(out, "conv1d.bias", g_bias, fd_tensor(bias, loss));
}

void check_selective_scan(std::vector<GradCheckResult>& out,
                          std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t win = 6, d = 4, ds = 3, n_valid = 4;
  SsmParams p = random_ssm(rng, d, ds, 3);
  Matrix x = masked_projection(rng, win, d, n_valid);
  const Matrix proj = masked_projection(rng, win, d, n_valid);

  ScanCache cache;
  selective_scan(x, n_valid, p, &cache);
  SsmGrads grads = make_ssm_grads(p);
  const Matrix gx = selective_scan_backward(proj, cache, p, &grads);

  const auto loss = [&]() {
    return dot_loss(selective_scan(x, n_valid, p, nullptr), proj);
  };
  record(out, "scan.x", gx, fd_tensor(x, loss));
  for (auto& [name, slot] : ssm_slots(p, "scan")) {
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (leaf == "conv_kernel" || leaf == "conv_bias") continue;
    record(out, name, ssm_grad_of(grads, leaf), fd_tensor(slot->value, loss));
  }
}

void check_bissm(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t win = 6, d = 4, ds = 3, n_valid = 4;
  BiSsmParams p{random_ssm(rng, d, ds, 3), random_ssm(rng, d, ds, 3),
                GradSlot(random_matrix(rng, 1, d, 0.3)),
                GradSlot(random_matrix(rng, 1, d, 0.2)),
                GradSlot(random_matrix(rng, 1, d, 0.3)),
                GradSlot(random_matrix(rng, 1, d, 0.2))};
  for (std::size_t j = 0; j < d; ++j) {
    p.norm_f_gain.value(0, j) += 1.0;
    p.norm_b_gain.value(0, j) += 1.0;
  }
  Matrix seq = masked_projection(rng, win, d, n_valid);
  const Matrix proj = masked_projection(rng, win, d, n_valid);

  for (const bool residual : {true, false}) {
    const std::string tag = residual ? "bissm" : "bissm.plain";
    BiSsmCache cache;
    bi_ssm_forward(seq, n_valid, p, residual, &cache);
    const BiSsmGrads grads = bi_ssm_backward(proj, cache, p);

    const auto loss = [&]() {
      return dot_loss(bi_ssm_forward(seq, n_valid, p, residual, nullptr),
                      proj);
    };
    record(out, tag + ".seq", grads.seq, fd_tensor(seq, loss));
    if (!residual) continue;  // parameter paths identical in both variants
    for (auto& [name, slot] : ssm_slots(p.fwd, tag + ".fwd")) {
      const std::string leaf = name.substr(name.rfind('.') + 1);
      record(out, name, ssm_grad_of(grads.fwd, leaf),
             fd_tensor(slot->value, loss));
    }
    for (auto& [name, slot] : ssm_slots(p.bwd, tag + ".bwd")) {
      const std::string leaf = name.substr(name.rfind('.') + 1);
      record(out, name, ssm_grad_of(grads.bwd, leaf),
             fd_tensor(slot->value, loss));
    }
    record(out, tag + ".norm_f_gain", grads.norm_f_gain,
           fd_tensor(p.norm_f_gain.value, loss));
    record(out, tag + ".norm_f_bias", grads.norm_f_bias,
           fd_tensor(p.norm_f_bias.value, loss));
    record(out, tag + ".norm_b_gain", grads.norm_b_gain,
           fd_tensor(p.norm_b_gain.value, loss));
    record(out, tag + ".norm_b_bias", grads.norm_b_bias,
           fd_tensor(p.norm_b_bias.value, loss));
  }
}

void check_layer_norm(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 5, d = 6;
  Matrix x = random_matrix(rng, n, d);
  Matrix gain = random_matrix(rng, 1, d, 0.3);
  Matrix bias = random_matrix(rng, 1, d, 0.3);
  for (std::size_t j = 0; j < d; ++j) gain(0, j) += 1.0;
  const Matrix proj = random_matrix(rng, n, d);

  LayerNormCache cache;
  layer_norm(x, gain, bias, kLayerNormEps, &cache);
  const LayerNormGrads grads = layer_norm_backward(proj, cache, gain);

  const auto loss = [&]() {
    return dot_loss(layer_norm(x, gain, bias, kLayerNormEps, nullptr), proj);
  };
  record(out, "layer_norm.x", grads.x, fd_tensor(x, loss));
  record(out, "layer_norm.gain", grads.gain, fd_tensor(gain, loss));
  record(out, "layer_norm.bias", grads.bias, fd_tensor(bias, loss));
}

void check_aggregate(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  const TileBag bag = random_bag(2, 3, 4, 0, seed);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  const ScanSet scans = build_scan_set(hg, 3, 0.7, seed + 7);
  Rng rng(seed + 11);

  std::vector<Matrix> z;
  for (const ScanSequence& s : scans.seqs) {
    z.push_back(masked_projection(rng, s.window, 4, s.n_valid));
  }
  Matrix fallback = random_matrix(rng, hg.n_nodes(), 4);
  const Matrix proj = random_matrix(rng, hg.n_nodes(), 4);

  std::vector<Matrix> g_seq;
  Matrix g_fallback(hg.n_nodes(), 4);
  for (const Matrix& zi : z) g_seq.emplace_back(zi.rows(), zi.cols());
  aggregate_tokens_backward(proj, scans, &g_seq, &g_fallback);

  const auto loss = [&]() {
    return dot_loss(aggregate_tokens(z, scans, fallback), proj);
  };
  for (std::size_t i = 0; i < z.size(); ++i) {
    record(out, "aggregate.z" + std::to_string(i), g_seq[i],
           fd_tensor(z[i], loss));
  }
  record(out, "aggregate.fallback", g_fallback, fd_tensor(fallback, loss));
}

void check_mil(std::vector<GradCheckResult>& out, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 7, d = 5, h = 4, classes = 3;
  MilParams p{GradSlot(random_matrix(rng, d, h, 0.5)),
              GradSlot(random_matrix(rng, d, h, 0.5)),
              GradSlot(random_matrix(rng, h, 1, 0.5)),
              GradSlot(random_matrix(rng, d, classes, 0.5)),
              GradSlot(random_matrix(rng, 1, classes, 0.2))};
  Matrix z = random_matrix(rng, n, d);
  const int label = 1;

  MilCache cache;
  Matrix logits = mil_forward(z, p, &cache);
  Matrix g_logits;
  cross_entropy(logits, label, &g_logits);
  MilGrads grads = make_mil_grads(p);
  const Matrix gz = mil_backward(g_logits, cache, p, &grads);

  const auto loss = [&]() {
    return cross_entropy(mil_forward(z, p, nullptr), label, nullptr);
  };
  record(out, "mil.z", gz, fd_tensor(z, loss));
  record(out, "mil.att_v", grads.att_v, fd_tensor(p.att_v.value, loss));
  record(out, "mil.att_u", grads.att_u, fd_tensor(p.att_u.value, loss));
  record(out, "mil.att_w", grads.att_w, fd_tensor(p.att_w.value, loss));
  record(out, "mil.cls_w", grads.cls_w, fd_tensor(p.cls_w.value, loss));
  record(out, "mil.cls_b", grads.cls_b, fd_tensor(p.cls_b.value, loss));
}

void check_model(std::vector<GradCheckResult>& out, const ModelConfig& cfg,
                 std::size_t rows, std::size_t cols, int label,
                 std::uint64_t seed, const std::string& tag) {
  const TileBag bag = random_bag(rows, cols, cfg.d, label, seed);
  const Hypergraph hg = build_bag_hypergraph(bag, cfg.top_k);
  ModelParams params = init_params(cfg, seed + 3);
  const auto scans = draw_scan_sets(hg, cfg, seed + 5);

  zero_grads(params);
  model_loss_and_backward(bag, cfg, params, hg, scans, 1.0);

  const auto loss = [&]() {
    Matrix logits = model_forward(bag, cfg, params, hg, scans, nullptr);
    return cross_entropy(logits, bag.label, nullptr);
  };
  visit_params(params, [&](const std::string& name, GradSlot& slot) {
    const Matrix fd = fd_tensor(slot.value, loss);
    record(out, tag + "." + name, slot.grad, fd);
  });
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const std::string& size) {
  if (size != "tiny" && size != "small") {
    throw std::invalid_argument("gradcheck size must be tiny or small");
  }
  std::vector<GradCheckResult> out;
  check_hgconv(out, 101);
  check_conv1d(out, 202);
  check_selective_scan(out, 303);
  check_bissm(out, 404);
  check_layer_norm(out, 505);
  check_aggregate(out, 606);
  check_mil(out, 707);

  ModelConfig tiny;
  tiny.d = 8;
  tiny.n_layers = 1;
  tiny.d_state = 4;
  tiny.m_sequences = 2;
  tiny.top_k = 2;
  tiny.conv_width = 3;
  tiny.n_classes = 2;
  tiny.attn_hidden = 4;
  check_model(out, tiny, 2, 3, 1, 808, "model");

  if (size == "small") {
    ModelConfig small;
    small.d = 12;
    small.n_layers = 2;
    small.d_state = 4;
    small.m_sequences = 4;
    small.top_k = 3;
    small.conv_width = 4;
    small.n_classes = 3;
    small.attn_hidden = 8;
    small.residual_input = false;
    check_model(out, small, 3, 4, 2, 909, "model.small");
  }
  return out;
}

bool gradcheck_all_pass(const std::vector<GradCheckResult>& results) {
  for (const GradCheckResult& r : results) {
    if (!r.pass) return false;
  }
  return !results.empty();
}

std::string render_gradcheck(const std::vector<GradCheckResult>& results) {
  std::string out;
  char buf[160];
  for (const GradCheckResult& r : results) {
    std::snprintf(buf, sizeof(buf), "%-28s rel_err=%.3e tol=%.0e %s\n",
                  r.name.c_str(), r.rel_err, r.tol,
                  r.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace hgmamba
