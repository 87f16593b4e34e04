#include "hgmamba/bissm.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "hgmamba/flops.hpp"

namespace hgmamba {

namespace {

double softplus(double z) {
  if (z > 30.0) return z;
  return std::log1p(std::exp(z));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void zero_rows_from(Matrix* m, std::size_t first_row) {
  for (std::size_t r = first_row; r < m->rows(); ++r) {
    for (std::size_t c = 0; c < m->cols(); ++c) (*m)(r, c) = 0.0;
  }
}

void check_vector_shape(const Matrix& m, std::size_t cols, const char* name) {
  if (m.rows() != 1 || m.cols() != cols) {
    throw std::invalid_argument(std::string(name) + ": expected 1 x " +
                                std::to_string(cols));
  }
}

void add_into(Matrix* dst, const Matrix& src) {
  for (std::size_t r = 0; r < dst->rows(); ++r) {
    for (std::size_t c = 0; c < dst->cols(); ++c) (*dst)(r, c) += src(r, c);
  }
}

}  // namespace

Matrix reverse_valid_prefix(const Matrix& x, std::size_t n_valid) {
  if (n_valid > x.rows()) {
    throw std::invalid_argument("reverse_valid_prefix: n_valid exceeds rows");
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::size_t src = r < n_valid ? n_valid - 1 - r : r;
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(src, c);
  }
  return out;
}

Matrix causal_conv1d(const Matrix& x, std::size_t n_valid,
                     const Matrix& kernel, const Matrix& bias,
                     ConvCache* cache) {
  const std::size_t win = x.rows();
  const std::size_t d = x.cols();
  const std::size_t w = kernel.cols();
  if (kernel.rows() != d) {
    throw std::invalid_argument("causal_conv1d: kernel rows != channels");
  }
  check_vector_shape(bias, d, "causal_conv1d bias");
  if (n_valid > win) {
    throw std::invalid_argument("causal_conv1d: n_valid exceeds window");
  }

  ComponentScope scope(Component::conv1d);
  add_flops(conv1d_flops(win, d, w));

  Matrix pre(win, d);
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = bias(0, c);
      for (std::size_t j = 0; j < w; ++j) {
        // Tap x[t - w + 1 + j]; out-of-range taps are implicit zeros.
        if (t + j + 1 >= w) acc += kernel(c, j) * x(t + j + 1 - w, c);
      }
      pre(t, c) = acc;
    }
  }
  Matrix y(win, d);
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      y(t, c) = pre(t, c) * sigmoid(pre(t, c));
    }
  }
  zero_rows_from(&y, n_valid);
  require_finite(y, "causal_conv1d output");

  if (cache != nullptr) {
    cache->x = x;
    cache->pre = pre;
    cache->n_valid = n_valid;
  }
  return y;
}

Matrix causal_conv1d_backward(const Matrix& gy, const ConvCache& cache,
                              const Matrix& kernel, Matrix* g_kernel,
                              Matrix* g_bias) {
  const std::size_t win = cache.x.rows();
  const std::size_t d = cache.x.cols();
  const std::size_t w = kernel.cols();
  if (gy.rows() != win || gy.cols() != d) {
    throw std::invalid_argument("causal_conv1d_backward: bad gy shape");
  }

  Matrix gpre(win, d);
  for (std::size_t t = 0; t < cache.n_valid; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double p = cache.pre(t, c);
      const double s = sigmoid(p);
      // d/dp [p * s(p)] = s + p * s * (1 - s)
      gpre(t, c) = gy(t, c) * (s + p * s * (1.0 - s));
    }
  }

  Matrix gx(win, d);
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double g = gpre(t, c);
      if (g == 0.0) continue;
      if (g_bias != nullptr) (*g_bias)(0, c) += g;
      for (std::size_t j = 0; j < w; ++j) {
        if (t + j + 1 < w) continue;
        const std::size_t ts = t + j + 1 - w;
        if (g_kernel != nullptr) (*g_kernel)(c, j) += g * cache.x(ts, c);
        gx(ts, c) += g * kernel(c, j);
      }
    }
  }
  return gx;
}

Matrix selective_scan(const Matrix& x, std::size_t n_valid, const SsmParams& p,
                      ScanCache* cache) {
  const std::size_t win = x.rows();
  const std::size_t d = x.cols();
  const std::size_t ds = p.d_state();
  if (p.a_log.value.rows() != d || p.b_proj.value.rows() != d ||
      p.b_proj.value.cols() != ds || p.c_proj.value.rows() != d ||
      p.c_proj.value.cols() != ds) {
    throw std::invalid_argument("selective_scan: parameter shape mismatch");
  }
  check_vector_shape(p.delta_w.value, d, "selective_scan delta_w");
  check_vector_shape(p.delta_b.value, d, "selective_scan delta_b");
  check_vector_shape(p.b_bias.value, ds, "selective_scan b_bias");
  check_vector_shape(p.c_bias.value, ds, "selective_scan c_bias");
  check_vector_shape(p.d_skip.value, d, "selective_scan d_skip");
  if (n_valid > win) {
    throw std::invalid_argument("selective_scan: n_valid exceeds window");
  }

  ComponentScope scope(Component::selective_scan);

  Matrix a(d, ds);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < ds; ++k) {
      a(c, k) = -std::exp(p.a_log.value(c, k));
    }
  }

  Matrix delta_pre(win, d);
  Matrix delta(win, d);
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double z = p.delta_w.value(0, c) * x(t, c) + p.delta_b.value(0, c);
      delta_pre(t, c) = z;
      delta(t, c) = softplus(z);
    }
  }

  Matrix bmat = matmul(x, p.b_proj.value);
  Matrix cmat = matmul(x, p.c_proj.value);
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t k = 0; k < ds; ++k) {
      bmat(t, k) += p.b_bias.value(0, k);
      cmat(t, k) += p.c_bias.value(0, k);
    }
  }

  add_flops(selective_scan_extra_flops(win, d, ds));

  std::vector<double> abar(win * d * ds, 0.0);
  std::vector<double> h(win * d * ds, 0.0);
  Matrix y(win, d);
  const auto idx = [d, ds](std::size_t t, std::size_t c, std::size_t k) {
    return (t * d + c) * ds + k;
  };
  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dt = delta(t, c);
      const double xv = x(t, c);
      double out = p.d_skip.value(0, c) * xv;
      for (std::size_t k = 0; k < ds; ++k) {
        const double ab = std::exp(dt * a(c, k));
        const double prev = t > 0 ? h[idx(t - 1, c, k)] : 0.0;
        const double hv = ab * prev + dt * bmat(t, k) * xv;
        abar[idx(t, c, k)] = ab;
        h[idx(t, c, k)] = hv;
        out += cmat(t, k) * hv;
      }
      y(t, c) = out;
    }
  }
  zero_rows_from(&y, n_valid);
  require_finite(y, "selective_scan output");

  if (cache != nullptr) {
    cache->x = x;
    cache->delta_pre = delta_pre;
    cache->delta = delta;
    cache->bmat = bmat;
    cache->cmat = cmat;
    cache->a = a;
    cache->abar = std::move(abar);
    cache->h = std::move(h);
    cache->n_valid = n_valid;
  }
  return y;
}

Matrix selective_scan_backward(const Matrix& gy, const ScanCache& cache,
                               const SsmParams& p, SsmGrads* grads) {
  const std::size_t win = cache.x.rows();
  const std::size_t d = cache.x.cols();
  const std::size_t ds = cache.a.cols();
  if (gy.rows() != win || gy.cols() != d) {
    throw std::invalid_argument("selective_scan_backward: bad gy shape");
  }
  const auto idx = [d, ds](std::size_t t, std::size_t c, std::size_t k) {
    return (t * d + c) * ds + k;
  };

  Matrix gx(win, d);
  Matrix gdelta(win, d);
  Matrix gb(win, ds);
  Matrix gc(win, ds);
  Matrix ga(d, ds);
  // carry(c, k) = dL/dh[t][c][k] contribution arriving from step t+1.
  Matrix carry(d, ds);

  for (std::size_t ti = win; ti-- > 0;) {
    for (std::size_t c = 0; c < d; ++c) {
      const double g = ti < cache.n_valid ? gy(ti, c) : 0.0;
      const double xv = cache.x(ti, c);
      const double dt = cache.delta(ti, c);
      if (g != 0.0) {
        gx(ti, c) += p.d_skip.value(0, c) * g;
        grads->d_skip(0, c) += g * xv;
      }
      for (std::size_t k = 0; k < ds; ++k) {
        const double gh = g * cache.cmat(ti, k) + carry(c, k);
        if (g != 0.0) gc(ti, k) += g * cache.h[idx(ti, c, k)];
        if (gh == 0.0) {
          carry(c, k) = 0.0;
          continue;
        }
        const double ab = cache.abar[idx(ti, c, k)];
        const double prev = ti > 0 ? cache.h[idx(ti - 1, c, k)] : 0.0;
        const double gabar = gh * prev;
        gdelta(ti, c) +=
            gabar * cache.a(c, k) * ab + gh * cache.bmat(ti, k) * xv;
        gb(ti, k) += gh * dt * xv;
        gx(ti, c) += gh * dt * cache.bmat(ti, k);
        ga(c, k) += gabar * dt * ab;
        carry(c, k) = gh * ab;
      }
    }
  }

  // dA/da_log = -exp(a_log) = A itself.
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < ds; ++k) {
      grads->a_log(c, k) += ga(c, k) * cache.a(c, k);
    }
  }

  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double gd = gdelta(t, c);
      if (gd == 0.0) continue;
      const double gz = gd * sigmoid(cache.delta_pre(t, c));
      grads->delta_w(0, c) += gz * cache.x(t, c);
      grads->delta_b(0, c) += gz;
      gx(t, c) += gz * p.delta_w.value(0, c);
    }
  }

  // B = x * b_proj + b_bias and the C analogue.
  Matrix xt = transpose(cache.x);
  add_into(&grads->b_proj, matmul(xt, gb));
  add_into(&grads->c_proj, matmul(xt, gc));
  add_into(&grads->b_bias, column_sums(gb));
  add_into(&grads->c_bias, column_sums(gc));
  add_into(&gx, matmul(gb, transpose(p.b_proj.value)));
  add_into(&gx, matmul(gc, transpose(p.c_proj.value)));
  return gx;
}

Matrix ssm_branch(const Matrix& x, std::size_t n_valid, const SsmParams& p,
                  const Matrix& norm_gain, const Matrix& norm_bias,
                  BranchCache* cache) {
  Matrix conv_out = causal_conv1d(x, n_valid, p.conv_kernel.value,
                                  p.conv_bias.value,
                                  cache != nullptr ? &cache->conv : nullptr);
  Matrix scan_out = selective_scan(conv_out, n_valid, p,
                                   cache != nullptr ? &cache->scan : nullptr);
  Matrix y;
  {
    ComponentScope scope(Component::merge_norm);
    y = layer_norm(scan_out, norm_gain, norm_bias, kLayerNormEps,
                   cache != nullptr ? &cache->ln : nullptr);
  }
  zero_rows_from(&y, n_valid);
  return y;
}

Matrix ssm_branch_backward(const Matrix& gy, const BranchCache& cache,
                           const SsmParams& p, const Matrix& norm_gain,
                           SsmGrads* grads, Matrix* g_norm_gain,
                           Matrix* g_norm_bias) {
  LayerNormGrads lng = layer_norm_backward(gy, cache.ln, norm_gain);
  if (g_norm_gain != nullptr) add_into(g_norm_gain, lng.gain);
  if (g_norm_bias != nullptr) add_into(g_norm_bias, lng.bias);
  Matrix g_conv = selective_scan_backward(lng.x, cache.scan, p, grads);
  return causal_conv1d_backward(g_conv, cache.conv, p.conv_kernel.value,
                                &grads->conv_kernel, &grads->conv_bias);
}

Matrix bi_ssm_forward(const Matrix& seq, std::size_t n_valid,
                      const BiSsmParams& p, bool residual_input,
                      BiSsmCache* cache) {
  if (n_valid > seq.rows()) {
    throw std::invalid_argument("bi_ssm_forward: n_valid exceeds window");
  }
  Matrix z_f = ssm_branch(seq, n_valid, p.fwd, p.norm_f_gain.value,
                          p.norm_f_bias.value,
                          cache != nullptr ? &cache->fwd : nullptr);
  Matrix rev = reverse_valid_prefix(seq, n_valid);
  Matrix z_brev = ssm_branch(rev, n_valid, p.bwd, p.norm_b_gain.value,
                             p.norm_b_bias.value,
                             cache != nullptr ? &cache->bwd : nullptr);
  Matrix z_b = reverse_valid_prefix(z_brev, n_valid);

  Matrix out(seq.rows(), seq.cols());
  {
    ComponentScope scope(Component::merge_norm);
    add_flops(residual_flops(seq.rows(), seq.cols(), residual_input));
    for (std::size_t t = 0; t < seq.rows(); ++t) {
      for (std::size_t c = 0; c < seq.cols(); ++c) {
        double v = z_f(t, c) + z_b(t, c);
        if (residual_input) v += seq(t, c);
        out(t, c) = v;
      }
    }
  }
  zero_rows_from(&out, n_valid);

  if (cache != nullptr) {
    cache->seq = seq;
    cache->n_valid = n_valid;
    cache->residual_input = residual_input;
  }
  return out;
}

BiSsmGrads bi_ssm_backward(const Matrix& gy, const BiSsmCache& cache,
                           const BiSsmParams& p) {
  const std::size_t win = cache.seq.rows();
  const std::size_t d = cache.seq.cols();
  if (gy.rows() != win || gy.cols() != d) {
    throw std::invalid_argument("bi_ssm_backward: bad gy shape");
  }
  Matrix g = gy;
  zero_rows_from(&g, cache.n_valid);

  BiSsmGrads grads = make_bi_ssm_grads(p, win, d);
  if (cache.residual_input) grads.seq = g;

  Matrix g_fwd_in =
      ssm_branch_backward(g, cache.fwd, p.fwd, p.norm_f_gain.value, &grads.fwd,
                          &grads.norm_f_gain, &grads.norm_f_bias);
  add_into(&grads.seq, g_fwd_in);

  Matrix g_rev = reverse_valid_prefix(g, cache.n_valid);
  Matrix g_bwd_in =
      ssm_branch_backward(g_rev, cache.bwd, p.bwd, p.norm_b_gain.value,
                          &grads.bwd, &grads.norm_b_gain, &grads.norm_b_bias);
  add_into(&grads.seq, reverse_valid_prefix(g_bwd_in, cache.n_valid));
  return grads;
}

Matrix aggregate_tokens(const std::vector<Matrix>& seq_outputs,
                        const ScanSet& scans, const Matrix& fallback) {
  if (seq_outputs.size() != scans.seqs.size()) {
    throw std::invalid_argument("aggregate_tokens: output/sequence mismatch");
  }
  const std::size_t n = fallback.rows();
  const std::size_t d = fallback.cols();
  if (scans.membership.size() != n) {
    throw std::invalid_argument("aggregate_tokens: membership size mismatch");
  }
  for (std::size_t m = 0; m < seq_outputs.size(); ++m) {
    if (seq_outputs[m].rows() != scans.seqs[m].window ||
        seq_outputs[m].cols() != d) {
      throw std::invalid_argument("aggregate_tokens: bad sequence output");
    }
  }

  ComponentScope scope(Component::aggregate);
  add_flops(
      aggregate_flops(scans.total_valid_tokens(), scans.covered_nodes(), d));

  Matrix out(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& sites = scans.membership[v];
    if (sites.empty()) {
      for (std::size_t c = 0; c < d; ++c) out(v, c) = fallback(v, c);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(sites.size());
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (const auto& site : sites) {
        acc += seq_outputs[site.first](site.second, c);
      }
      out(v, c) = acc * inv;
    }
  }
  require_finite(out, "aggregate_tokens output");
  return out;
}

void aggregate_tokens_backward(const Matrix& g_nodes, const ScanSet& scans,
                               std::vector<Matrix>* g_seq_outputs,
                               Matrix* g_fallback) {
  const std::size_t n = g_nodes.rows();
  const std::size_t d = g_nodes.cols();
  g_seq_outputs->clear();
  g_seq_outputs->reserve(scans.seqs.size());
  for (const auto& seq : scans.seqs) {
    g_seq_outputs->emplace_back(seq.window, d);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const auto& sites = scans.membership[v];
    if (sites.empty()) {
      for (std::size_t c = 0; c < d; ++c) {
        (*g_fallback)(v, c) += g_nodes(v, c);
      }
      continue;
    }
    const double inv = 1.0 / static_cast<double>(sites.size());
    for (const auto& site : sites) {
      Matrix& g = (*g_seq_outputs)[site.first];
      for (std::size_t c = 0; c < d; ++c) {
        g(site.second, c) += g_nodes(v, c) * inv;
      }
    }
  }
}

SsmGrads make_ssm_grads(const SsmParams& p) {
  SsmGrads g;
  const auto zeros = [](const Matrix& like) {
    return Matrix(like.rows(), like.cols());
  };
  g.conv_kernel = zeros(p.conv_kernel.value);
  g.conv_bias = zeros(p.conv_bias.value);
  g.a_log = zeros(p.a_log.value);
  g.delta_w = zeros(p.delta_w.value);
  g.delta_b = zeros(p.delta_b.value);
  g.b_proj = zeros(p.b_proj.value);
  g.b_bias = zeros(p.b_bias.value);
  g.c_proj = zeros(p.c_proj.value);
  g.c_bias = zeros(p.c_bias.value);
  g.d_skip = zeros(p.d_skip.value);
  return g;
}

BiSsmGrads make_bi_ssm_grads(const BiSsmParams& p, std::size_t win,
                             std::size_t dim) {
  BiSsmGrads g;
  g.fwd = make_ssm_grads(p.fwd);
  g.bwd = make_ssm_grads(p.bwd);
  g.norm_f_gain = Matrix(1, dim);
  g.norm_f_bias = Matrix(1, dim);
  g.norm_b_gain = Matrix(1, dim);
  g.norm_b_bias = Matrix(1, dim);
  g.seq = Matrix(win, dim);
  return g;
}

}  // namespace hgmamba
