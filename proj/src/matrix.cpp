#include "hgmamba/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hgmamba/flops.hpp"

namespace hgmamba {

Matrix Matrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
  std::size_t i = 0;
  for (const auto& r : rows) {
    if (r.size() != m.cols_)
      throw std::invalid_argument("from_rows: ragged initializer");
    std::size_t j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument(
        "matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
        " vs " + std::to_string(b.rows()) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  // i-k-j order keeps the b walk contiguous.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  add_flops(matmul_flops(m, k, n));
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(0, j) += a(i, j);
  return s;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  double eps, LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) throw std::invalid_argument("layer_norm: zero-width rows");
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d)
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");

  Matrix out(n, d);
  if (cache) {
    cache->xhat = Matrix(n, d);
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x(i, j) - mean) * inv_std;
      if (cache) cache->xhat(i, j) = xh;
      out(i, j) = gain(0, j) * xh + bias(0, j);
    }
    if (cache) cache->inv_std[i] = inv_std;
  }
  add_flops(layer_norm_flops(n, d));
  return out;
}

LayerNormGrads layer_norm_backward(const Matrix& grad_out,
                                   const LayerNormCache& cache,
                                   const Matrix& gain) {
  const std::size_t n = grad_out.rows(), d = grad_out.cols();
  LayerNormGrads g;
  g.x = Matrix(n, d);
  g.gain = Matrix(1, d);
  g.bias = Matrix(1, d);
  const double dd = static_cast<double>(d);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_gxh = 0.0, sum_gxh_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double gxh = grad_out(i, j) * gain(0, j);
      sum_gxh += gxh;
      sum_gxh_xh += gxh * cache.xhat(i, j);
      g.gain(0, j) += grad_out(i, j) * cache.xhat(i, j);
      g.bias(0, j) += grad_out(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double gxh = grad_out(i, j) * gain(0, j);
      g.x(i, j) = cache.inv_std[i] *
                  (gxh - sum_gxh / dd - cache.xhat(i, j) * sum_gxh_xh / dd);
    }
  }
  return g;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v))
      throw std::invalid_argument("softmax: non-finite input");
    mx = std::max(mx, v);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  add_flops(softmax_flops(logits.size()));
  return p;
}

Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& x, double h) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double fp = f(probe);
      probe(i, j) = orig - h;
      const double fm = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  return grad;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    mx = std::max(mx, std::abs(a.raw()[i] - b.raw()[i]));
  return mx;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  if (!a.same_shape(b))
    throw std::invalid_argument("relative_error: shape mismatch");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.raw()[i] - b.raw()[i];
    num += d * d;
    na += a.raw()[i] * a.raw()[i];
    nb += b.raw()[i] * b.raw()[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), floor});
  return std::sqrt(num) / denom;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite())
    throw std::invalid_argument(std::string(what) + ": non-finite values");
}

}  // namespace hgmamba
