#include "hgmamba/milhead.hpp"

#include <cmath>
#include <stdexcept>

#include "hgmamba/flops.hpp"

namespace hgmamba {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Matrix mil_forward(const Matrix& z, const MilParams& p, MilCache* cache) {
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  const std::size_t h = p.hidden();
  const std::size_t nc = p.n_classes();
  if (n == 0) throw std::invalid_argument("mil_forward: empty bag");
  if (p.att_v.value.rows() != d || p.att_u.value.rows() != d ||
      p.att_u.value.cols() != h || p.att_w.value.rows() != h ||
      p.att_w.value.cols() != 1 || p.cls_w.value.rows() != d ||
      p.cls_b.value.cols() != nc || p.cls_b.value.rows() != 1) {
    throw std::invalid_argument("mil_forward: parameter shape mismatch");
  }

  ComponentScope scope(Component::mil_head);

  Matrix tv = matmul(z, p.att_v.value);
  Matrix gu = matmul(z, p.att_u.value);
  add_flops(5 * static_cast<std::uint64_t>(n) * h);
  Matrix gated(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      tv(i, j) = std::tanh(tv(i, j));
      gu(i, j) = sigmoid(gu(i, j));
      gated(i, j) = tv(i, j) * gu(i, j);
    }
  }

  Matrix scores = matmul(gated, p.att_w.value);  // n x 1
  std::vector<double> svec(n);
  for (std::size_t i = 0; i < n; ++i) svec[i] = scores(i, 0);
  const std::vector<double> probs = softmax(svec);
  Matrix attn(n, 1);
  for (std::size_t i = 0; i < n; ++i) attn(i, 0) = probs[i];

  add_flops(2 * static_cast<std::uint64_t>(n) * d);
  Matrix bag(1, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = attn(i, 0);
    for (std::size_t c = 0; c < d; ++c) bag(0, c) += w * z(i, c);
  }

  Matrix logits = matmul(bag, p.cls_w.value);
  add_flops(nc);
  for (std::size_t c = 0; c < nc; ++c) logits(0, c) += p.cls_b.value(0, c);
  require_finite(logits, "mil_forward logits");

  if (cache != nullptr) {
    cache->z = z;
    cache->tv = std::move(tv);
    cache->gu = std::move(gu);
    cache->attn = std::move(attn);
    cache->bag = std::move(bag);
  }
  return logits;
}

Matrix mil_backward(const Matrix& g_logits, const MilCache& cache,
                    const MilParams& p, MilGrads* grads) {
  const std::size_t n = cache.z.rows();
  const std::size_t d = cache.z.cols();
  const std::size_t h = p.hidden();
  const std::size_t nc = p.n_classes();
  if (g_logits.rows() != 1 || g_logits.cols() != nc) {
    throw std::invalid_argument("mil_backward: bad g_logits shape");
  }

  // logits = bag cls_w + cls_b
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < nc; ++c) {
      grads->cls_w(i, c) += cache.bag(0, i) * g_logits(0, c);
    }
  }
  for (std::size_t c = 0; c < nc; ++c) grads->cls_b(0, c) += g_logits(0, c);
  Matrix g_bag = matmul(g_logits, transpose(p.cls_w.value));  // 1 x d

  // bag = sum_i attn_i z_i
  Matrix gz(n, d);
  std::vector<double> g_attn(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    const double w = cache.attn(i, 0);
    for (std::size_t c = 0; c < d; ++c) {
      dot += g_bag(0, c) * cache.z(i, c);
      gz(i, c) += w * g_bag(0, c);
    }
    g_attn[i] = dot;
  }

  // attn = softmax(scores)
  double inner = 0.0;
  for (std::size_t i = 0; i < n; ++i) inner += cache.attn(i, 0) * g_attn[i];
  Matrix g_scores(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    g_scores(i, 0) = cache.attn(i, 0) * (g_attn[i] - inner);
  }

  // scores = gated att_w with gated = tv * gu
  Matrix g_gated = matmul(g_scores, transpose(p.att_w.value));  // n x h
  Matrix gated(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      gated(i, j) = cache.tv(i, j) * cache.gu(i, j);
    }
  }
  {
    Matrix gw = matmul(transpose(gated), g_scores);  // h x 1
    for (std::size_t j = 0; j < h; ++j) grads->att_w(j, 0) += gw(j, 0);
  }

  Matrix g_pre_v(n, h);
  Matrix g_pre_u(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      const double t = cache.tv(i, j);
      const double s = cache.gu(i, j);
      const double gg = g_gated(i, j);
      g_pre_v(i, j) = gg * s * (1.0 - t * t);
      g_pre_u(i, j) = gg * t * s * (1.0 - s);
    }
  }
  Matrix zt = transpose(cache.z);
  {
    Matrix gv = matmul(zt, g_pre_v);
    Matrix gu = matmul(zt, g_pre_u);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < h; ++j) {
        grads->att_v(i, j) += gv(i, j);
        grads->att_u(i, j) += gu(i, j);
      }
    }
  }
  {
    Matrix gz_v = matmul(g_pre_v, transpose(p.att_v.value));
    Matrix gz_u = matmul(g_pre_u, transpose(p.att_u.value));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        gz(i, c) += gz_v(i, c) + gz_u(i, c);
      }
    }
  }
  return gz;
}

MilGrads make_mil_grads(const MilParams& p) {
  MilGrads g;
  const auto zeros = [](const Matrix& like) {
    return Matrix(like.rows(), like.cols());
  };
  g.att_v = zeros(p.att_v.value);
  g.att_u = zeros(p.att_u.value);
  g.att_w = zeros(p.att_w.value);
  g.cls_w = zeros(p.cls_w.value);
  g.cls_b = zeros(p.cls_b.value);
  return g;
}

double cross_entropy(const Matrix& logits, int label, Matrix* g_logits) {
  const std::size_t nc = logits.cols();
  if (logits.rows() != 1 || nc == 0) {
    throw std::invalid_argument("cross_entropy: logits must be 1 x C");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= nc) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  double mx = logits(0, 0);
  for (std::size_t c = 1; c < nc; ++c) mx = std::max(mx, logits(0, c));
  double lse = 0.0;
  for (std::size_t c = 0; c < nc; ++c) lse += std::exp(logits(0, c) - mx);
  lse = mx + std::log(lse);
  const double loss = lse - logits(0, static_cast<std::size_t>(label));
  if (g_logits != nullptr) {
    *g_logits = Matrix(1, nc);
    for (std::size_t c = 0; c < nc; ++c) {
      double p = std::exp(logits(0, c) - lse);
      if (c == static_cast<std::size_t>(label)) p -= 1.0;
      (*g_logits)(0, c) = p;
    }
  }
  return loss;
}

std::vector<double> class_probabilities(const Matrix& logits) {
  if (logits.rows() != 1) {
    throw std::invalid_argument("class_probabilities: logits must be 1 x C");
  }
  std::vector<double> v(logits.cols());
  for (std::size_t c = 0; c < logits.cols(); ++c) v[c] = logits(0, c);
  return softmax(v);
}

}  // namespace hgmamba
