#include <cmath>
#include <vector>

#include "doctest.h"
#include "hgmamba/bissm.hpp"
#include "hgmamba/model.hpp"
#include "hgmamba/rng.hpp"

using namespace hgmamba;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c,
                     double scale = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.raw()[i] = scale * rng.normal();
  return m;
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

BiSsmParams shared_bissm(Rng& rng, std::size_t d, std::size_t ds,
                         std::size_t w) {
  SsmParams one = random_ssm(rng, d, ds, w);
  SsmParams two = one;  // shared directions for the symmetry cases
  BiSsmParams p{std::move(one), std::move(two), GradSlot(Matrix(1, d, 1.0)),
                GradSlot(Matrix(1, d)), GradSlot(Matrix(1, d, 1.0)),
                GradSlot(Matrix(1, d))};
  return p;
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("reverse_valid_prefix reverses only the prefix and is an involution") {
  const Matrix x = Matrix::from_rows({{1}, {2}, {3}, {9}, {8}});
  const Matrix r = reverse_valid_prefix(x, 3);
  CHECK(r(0, 0) == 3.0);
  CHECK(r(1, 0) == 2.0);
  CHECK(r(2, 0) == 1.0);
  CHECK(r(3, 0) == 9.0);
  CHECK(r(4, 0) == 8.0);
  CHECK(max_abs_diff(reverse_valid_prefix(r, 3), x) == 0.0);
}

TEST_CASE("conv identity kernel reproduces the input pre-activation") {
  Rng rng(1);
  const std::size_t win = 6, d = 3, w = 4, n_valid = 5;
  const Matrix x = random_matrix(rng, win, d);
  Matrix kernel(d, w);
  for (std::size_t c = 0; c < d; ++c) kernel(c, w - 1) = 1.0;
  const Matrix bias(1, d);

  ConvCache cache;
  const Matrix y = causal_conv1d(x, n_valid, kernel, bias, &cache);
  for (std::size_t t = 0; t < n_valid; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(cache.pre(t, c) == doctest::Approx(x(t, c)).epsilon(1e-15));
      CHECK(y(t, c) == doctest::Approx(silu(x(t, c))).epsilon(1e-12));
    }
  }
  for (std::size_t t = n_valid; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) CHECK(y(t, c) == 0.0);
  }
}

TEST_CASE("conv of zero input is zero") {
  const Matrix x(5, 3);
  Rng rng(2);
  const Matrix kernel = random_matrix(rng, 3, 4);
  const Matrix bias(1, 3);
  const Matrix y = causal_conv1d(x, 5, kernel, bias, nullptr);
  CHECK(max_abs_diff(y, Matrix(5, 3)) == 0.0);
}

TEST_CASE("conv matches a naive sliding-window oracle") {
  Rng rng(3);
  const std::size_t win = 9, d = 4, w = 4, n_valid = 7;
  const Matrix x = random_matrix(rng, win, d);
  const Matrix kernel = random_matrix(rng, d, w);
  const Matrix bias = random_matrix(rng, 1, d);
  const Matrix y = causal_conv1d(x, n_valid, kernel, bias, nullptr);

  for (std::size_t t = 0; t < win; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      if (t >= n_valid) {
        CHECK(y(t, c) == 0.0);
        continue;
      }
      double acc = bias(0, c);
      for (std::size_t j = 0; j < w; ++j) {
        if (t + j + 1 >= w) acc += kernel(c, j) * x(t + j + 1 - w, c);
      }
      CHECK(y(t, c) == doctest::Approx(silu(acc)).epsilon(1e-12));
    }
  }
}

TEST_CASE("selective scan prefix-sum degenerate case is exact") {
  // A -> -0 (a_log very negative) makes Abar = 1; constant projections make
  // Bbar = 1; the recurrence collapses to a running sum.
  SsmParams p{GradSlot(Matrix(1, 4)),  // conv unused here
              GradSlot(Matrix(1, 1)),
              GradSlot(Matrix(1, 1, -745.0)),
              GradSlot(Matrix(1, 1)),
              GradSlot(Matrix(1, 1, std::log(std::exp(1.0) - 1.0))),
              GradSlot(Matrix(1, 1)),
              GradSlot(Matrix(1, 1, 1.0)),
              GradSlot(Matrix(1, 1)),
              GradSlot(Matrix(1, 1, 1.0)),
              GradSlot(Matrix(1, 1))};

  const Matrix x = Matrix::from_rows({{1}, {2}, {3}});
  const Matrix y = selective_scan(x, 3, p, nullptr);
  CHECK(std::abs(y(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(y(1, 0) - 3.0) < 1e-12);
  CHECK(std::abs(y(2, 0) - 6.0) < 1e-12);
}

TEST_CASE("selective scan of zero input is zero") {
  Rng rng(4);
  SsmParams p = random_ssm(rng, 3, 2, 4);
  const Matrix y = selective_scan(Matrix(6, 3), 4, p, nullptr);
  CHECK(max_abs_diff(y, Matrix(6, 3)) == 0.0);
}

TEST_CASE("selective scan matches an unrolled recurrence oracle") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 1000);
    const std::size_t win = 2 + rng.uniform_below(8);
    const std::size_t d = 1 + rng.uniform_below(4);
    const std::size_t ds = 1 + rng.uniform_below(4);
    const std::size_t n_valid = 1 + rng.uniform_below(win);
    SsmParams p = random_ssm(rng, d, ds, 4);
    Matrix x = random_matrix(rng, win, d);
    for (std::size_t t = n_valid; t < win; ++t) {
      for (std::size_t c = 0; c < d; ++c) x(t, c) = 0.0;
    }
    const Matrix y = selective_scan(x, n_valid, p, nullptr);

    // Oracle: literal per-step recurrence in plain loops.
    Matrix want(win, d);
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> h(ds, 0.0);
      for (std::size_t t = 0; t < n_valid; ++t) {
        const double delta_pre =
            p.delta_w.value(0, c) * x(t, c) + p.delta_b.value(0, c);
        const double delta = std::log1p(std::exp(delta_pre));
        double out = p.d_skip.value(0, c) * x(t, c);
        for (std::size_t k = 0; k < ds; ++k) {
          double b = p.b_bias.value(0, k), cc = p.c_bias.value(0, k);
          for (std::size_t j = 0; j < d; ++j) {
            b += x(t, j) * p.b_proj.value(j, k);
            cc += x(t, j) * p.c_proj.value(j, k);
          }
          const double a = -std::exp(p.a_log.value(c, k));
          h[k] = std::exp(delta * a) * h[k] + delta * b * x(t, c);
          out += cc * h[k];
        }
        want(t, c) = out;
      }
    }
    CHECK(max_abs_diff(y, want) < 1e-12);
  }
}

TEST_CASE("padding invariance: appended padding never changes valid rows") {
  Rng rng(5);
  const std::size_t d = 3, ds = 2, n = 5;
  SsmParams p = random_ssm(rng, d, ds, 4);
  const Matrix x = random_matrix(rng, n, d);
  Matrix padded(n + 4, d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) padded(t, c) = x(t, c);
  }

  SUBCASE("conv") {
    const Matrix a =
        causal_conv1d(x, n, p.conv_kernel.value, p.conv_bias.value, nullptr);
    const Matrix b = causal_conv1d(padded, n, p.conv_kernel.value,
                                   p.conv_bias.value, nullptr);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) CHECK(a(t, c) == b(t, c));
    }
    for (std::size_t t = n; t < n + 4; ++t) {
      for (std::size_t c = 0; c < d; ++c) CHECK(b(t, c) == 0.0);
    }
  }

  SUBCASE("selective scan") {
    const Matrix a = selective_scan(x, n, p, nullptr);
    const Matrix b = selective_scan(padded, n, p, nullptr);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) CHECK(a(t, c) == b(t, c));
    }
  }

  SUBCASE("bi-ssm") {
    Rng rng2(6);
    BiSsmParams bp = shared_bissm(rng2, d, ds, 4);
    const Matrix a = bi_ssm_forward(x, n, bp, true, nullptr);
    const Matrix b = bi_ssm_forward(padded, n, bp, true, nullptr);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) CHECK(a(t, c) == b(t, c));
    }
    for (std::size_t t = n; t < n + 4; ++t) {
      for (std::size_t c = 0; c < d; ++c) CHECK(b(t, c) == 0.0);
    }
  }
}

TEST_CASE("stability: negative A and positive delta keep long scans bounded") {
  Rng rng(7);
  const std::size_t d = 2, ds = 2;
  SsmParams p = random_ssm(rng, d, ds, 4);
  const Matrix x = random_matrix(rng, 4096, d);
  ScanCache cache;
  const Matrix y = selective_scan(x, 4096, p, &cache);
  CHECK(y.all_finite());
  for (const double abar : cache.abar) {
    CHECK(abar > 0.0);
    CHECK(abar < 1.0);
  }
}

TEST_CASE("palindromic input with shared params mirrors the branches") {
  Rng rng(8);
  const std::size_t d = 3, ds = 2, n = 5;
  BiSsmParams p = shared_bissm(rng, d, ds, 4);
  Matrix x(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t mirror = std::min(t, n - 1 - t);
    for (std::size_t c = 0; c < d; ++c) {
      x(t, c) = std::sin(static_cast<double>(mirror * d + c) + 0.3);
    }
  }

  const Matrix z_f = ssm_branch(x, n, p.fwd, p.norm_f_gain.value,
                                p.norm_f_bias.value, nullptr);
  const Matrix z_b = reverse_valid_prefix(
      ssm_branch(reverse_valid_prefix(x, n), n, p.bwd, p.norm_b_gain.value,
                 p.norm_b_bias.value, nullptr),
      n);
  CHECK(max_abs_diff(z_b, reverse_valid_prefix(z_f, n)) == 0.0);

  // And the bi-directional composition is exactly branch sum (+ input).
  const Matrix plain = bi_ssm_forward(x, n, p, false, nullptr);
  const Matrix with_res = bi_ssm_forward(x, n, p, true, nullptr);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(plain(t, c) ==
            doctest::Approx(z_f(t, c) + z_b(t, c)).epsilon(1e-12));
      CHECK(with_res(t, c) ==
            doctest::Approx(z_f(t, c) + z_b(t, c) + x(t, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("single valid token: both branches agree") {
  Rng rng(9);
  const std::size_t d = 4, ds = 3;
  BiSsmParams p = shared_bissm(rng, d, ds, 4);
  const Matrix x = random_matrix(rng, 3, d);  // window 3, one valid row
  Matrix x0 = x;
  for (std::size_t t = 1; t < 3; ++t) {
    for (std::size_t c = 0; c < d; ++c) x0(t, c) = 0.0;
  }
  const Matrix z_f = ssm_branch(x0, 1, p.fwd, p.norm_f_gain.value,
                                p.norm_f_bias.value, nullptr);
  const Matrix out = bi_ssm_forward(x0, 1, p, false, nullptr);
  for (std::size_t c = 0; c < d; ++c) {
    CHECK(out(0, c) == doctest::Approx(2.0 * z_f(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("zero grad_out gives zero gradients through the bi-ssm") {
  Rng rng(10);
  const std::size_t d = 3, ds = 2, n = 4;
  BiSsmParams p = shared_bissm(rng, d, ds, 4);
  const Matrix x = random_matrix(rng, n, d);
  BiSsmCache cache;
  bi_ssm_forward(x, n, p, true, &cache);
  const BiSsmGrads g = bi_ssm_backward(Matrix(n, d), cache, p);
  CHECK(max_abs_diff(g.seq, Matrix(n, d)) == 0.0);
  CHECK(max_abs_diff(g.fwd.a_log, Matrix(d, ds)) == 0.0);
  CHECK(max_abs_diff(g.norm_f_gain, Matrix(1, d)) == 0.0);
}

TEST_CASE("scan backward matches finite differences on a 3-step scalar case") {
  Rng rng(11);
  SsmParams p = random_ssm(rng, 1, 1, 4);
  Matrix x = random_matrix(rng, 3, 1);
  const Matrix proj = random_matrix(rng, 3, 1);

  ScanCache cache;
  selective_scan(x, 3, p, &cache);
  SsmGrads grads = make_ssm_grads(p);
  const Matrix gx = selective_scan_backward(proj, cache, p, &grads);

  const auto loss = [&](const Matrix& probe) {
    const Matrix y = selective_scan(probe, 3, p, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.raw()[i] * proj.raw()[i];
    return s;
  };
  CHECK(relative_error(gx, finite_difference_gradient(loss, x)) < 1e-6);
}

TEST_CASE("aggregation pinned mean and permutation inversion") {
  // Hand-built scan set: 2 sequences over 2 nodes; node 0 appears in both.
  ScanSet scans;
  ScanSequence s0;
  s0.order = {0, 1};
  s0.valid = {1, 1};
  s0.n_valid = 2;
  s0.window = 2;
  ScanSequence s1;
  s1.order = {1, 0};
  s1.valid = {1, 1};
  s1.n_valid = 2;
  s1.window = 2;
  scans.seqs = {s0, s1};
  scans.membership = {{{0, 0}, {1, 1}}, {{0, 1}, {1, 0}}};

  const Matrix z0 = Matrix::from_rows({{2}, {10}});
  const Matrix z1 = Matrix::from_rows({{20}, {4}});
  const Matrix fallback = Matrix::from_rows({{-1}, {-2}});
  const Matrix out = aggregate_tokens({z0, z1}, scans, fallback);
  CHECK(out(0, 0) == doctest::Approx(3.0).epsilon(1e-15));   // mean(2, 4)
  CHECK(out(1, 0) == doctest::Approx(15.0).epsilon(1e-15));  // mean(10, 20)

  // Single full-cover sequence inverts the flattening permutation.
  ScanSet one;
  one.seqs = {s1};
  one.membership = {{{0, 1}}, {{0, 0}}};
  const Matrix inv = aggregate_tokens({z1}, one, fallback);
  CHECK(inv(0, 0) == 4.0);
  CHECK(inv(1, 0) == 20.0);
}

TEST_CASE("aggregation falls back for uncovered nodes") {
  ScanSet scans;
  ScanSequence s0;
  s0.order = {1, 0};
  s0.valid = {1, 0};
  s0.n_valid = 1;
  s0.window = 1;
  scans.seqs = {s0};
  scans.membership = {{}, {{0, 0}}};
  const Matrix z = Matrix::from_rows({{7}});  // window rows, not N
  const Matrix fallback = Matrix::from_rows({{-5}, {-6}});
  const Matrix out = aggregate_tokens({z}, scans, fallback);
  CHECK(out(0, 0) == -5.0);
  CHECK(out(1, 0) == 7.0);
}

TEST_CASE("aggregation matches a recount oracle on random scan sets") {
  Rng rng(12);
  TileBag bag;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) bag.coords.push_back({r, c});
  }
  bag.features = random_matrix(rng, 12, 3);
  const Hypergraph hg = build_bag_hypergraph(bag, 2);
  const ScanSet scans = build_scan_set(hg, 4, 0.7, 77);

  std::vector<Matrix> z;
  for (const ScanSequence& s : scans.seqs) {
    z.push_back(random_matrix(rng, s.window, 3));
  }
  const Matrix fallback = random_matrix(rng, 12, 3);
  const Matrix out = aggregate_tokens(z, scans, fallback);

  for (std::size_t v = 0; v < 12; ++v) {
    const auto& sites = scans.membership[v];
    for (std::size_t c = 0; c < 3; ++c) {
      double want = 0.0;
      for (const auto& [m, p] : sites) want += z[m](p, c);
      want = sites.empty() ? fallback(v, c)
                           : want / static_cast<double>(sites.size());
      CHECK(out(v, c) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}
