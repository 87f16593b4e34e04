#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "hgmamba/flops.hpp"
#include "hgmamba/milhead.hpp"
#include "hgmamba/rng.hpp"

using namespace hgmamba;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c,
                     double scale = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.raw()[i] = scale * rng.normal();
  return m;
}

MilParams random_mil(Rng& rng, std::size_t d, std::size_t h, std::size_t c) {
  return MilParams{GradSlot(random_matrix(rng, d, h, 0.4)),
                   GradSlot(random_matrix(rng, d, h, 0.4)),
                   GradSlot(random_matrix(rng, h, 1, 0.4)),
                   GradSlot(random_matrix(rng, d, c, 0.4)),
                   GradSlot(random_matrix(rng, 1, c, 0.1))};
}

}  // namespace

TEST_CASE("identical instances share attention and the bag is the instance") {
  Rng rng(21);
  MilParams p = random_mil(rng, 5, 4, 3);
  Matrix z(2, 5);
  for (std::size_t c = 0; c < 5; ++c) {
    z(0, c) = 0.3 * static_cast<double>(c) - 0.7;
    z(1, c) = z(0, c);
  }
  MilCache cache;
  mil_forward(z, p, &cache);
  CHECK(cache.attn(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cache.attn(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(cache.bag(0, c) == doctest::Approx(z(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("single instance gets attention exactly 1") {
  Rng rng(22);
  MilParams p = random_mil(rng, 4, 3, 2);
  const Matrix z = random_matrix(rng, 1, 4);
  MilCache cache;
  mil_forward(z, p, &cache);
  CHECK(cache.attn(0, 0) == 1.0);
  for (std::size_t c = 0; c < 4; ++c) CHECK(cache.bag(0, c) == z(0, c));
}

TEST_CASE("attention normalizes and matches a direct recomputation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const std::size_t n = 1 + rng.uniform_below(9);
    const std::size_t d = 3, h = 4, c = 2;
    MilParams p = random_mil(rng, d, h, c);
    const Matrix z = random_matrix(rng, n, d);
    MilCache cache;
    const Matrix logits = mil_forward(z, p, &cache);

    double total = 0.0;
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      total += cache.attn(i, 0);
      double s = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        double tv = 0.0, gu = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          tv += z(i, k) * p.att_v.value(k, j);
          gu += z(i, k) * p.att_u.value(k, j);
        }
        const double sig = 1.0 / (1.0 + std::exp(-gu));
        s += p.att_w.value(j, 0) * std::tanh(tv) * sig;
      }
      scores[i] = s;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);

    const std::vector<double> want = softmax(scores);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(cache.attn(i, 0) == doctest::Approx(want[i]).epsilon(1e-10));
    }

    // Bag vector and logits recomputed directly.
    for (std::size_t k = 0; k < d; ++k) {
      double bag = 0.0;
      for (std::size_t i = 0; i < n; ++i) bag += want[i] * z(i, k);
      CHECK(cache.bag(0, k) == doctest::Approx(bag).epsilon(1e-10));
    }
    for (std::size_t j = 0; j < c; ++j) {
      double l = p.cls_b.value(0, j);
      for (std::size_t k = 0; k < d; ++k) {
        l += cache.bag(0, k) * p.cls_w.value(k, j);
      }
      CHECK(logits(0, j) == doctest::Approx(l).epsilon(1e-10));
    }
  }
}

TEST_CASE("permuting instances permutes attention but not the bag") {
  Rng rng(23);
  MilParams p = random_mil(rng, 4, 3, 2);
  const Matrix z = random_matrix(rng, 6, 4);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Matrix zp(6, 4);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 4; ++c) zp(i, c) = z(perm[i], c);
  }
  MilCache a, b;
  const Matrix la = mil_forward(z, p, &a);
  const Matrix lb = mil_forward(zp, p, &b);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(b.attn(i, 0) == doctest::Approx(a.attn(perm[i], 0)).epsilon(1e-12));
  }
  CHECK(max_abs_diff(a.bag, b.bag) < 1e-12);
  CHECK(max_abs_diff(la, lb) < 1e-12);
}

TEST_CASE("doubling the score head scales scores but keeps the ranking") {
  Rng rng(24);
  MilParams p = random_mil(rng, 4, 3, 2);
  const Matrix z = random_matrix(rng, 5, 4);
  MilCache base;
  mil_forward(z, p, &base);

  MilParams scaled = random_mil(rng, 4, 3, 2);
  scaled.att_v.value = p.att_v.value;
  scaled.att_u.value = p.att_u.value;
  scaled.cls_w.value = p.cls_w.value;
  scaled.cls_b.value = p.cls_b.value;
  scaled.att_w.value = p.att_w.value;
  for (std::size_t j = 0; j < 3; ++j) scaled.att_w.value(j, 0) *= 2.0;
  MilCache twice;
  mil_forward(z, scaled, &twice);

  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const bool lt = base.attn(i, 0) < base.attn(j, 0);
      CHECK(lt == (twice.attn(i, 0) < twice.attn(j, 0)));
    }
  }
}

TEST_CASE("cross entropy pins") {
  SUBCASE("two equal logits cost ln 2") {
    const Matrix logits = Matrix::from_rows({{0, 0}});
    Matrix g;
    const double loss = cross_entropy(logits, 0, &g);
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(g(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("saturated correct logit costs nearly nothing") {
    const Matrix logits = Matrix::from_rows({{100, 0}});
    CHECK(cross_entropy(logits, 0, nullptr) < 1e-8);
    CHECK(std::isfinite(cross_entropy(logits, 1, nullptr)));
    CHECK(cross_entropy(logits, 1, nullptr) ==
          doctest::Approx(100.0).epsilon(1e-10));
  }
  SUBCASE("huge logits stay finite") {
    const Matrix logits = Matrix::from_rows({{5000, -5000, 100}});
    CHECK(std::isfinite(cross_entropy(logits, 2, nullptr)));
  }
  SUBCASE("label out of range throws") {
    const Matrix logits = Matrix::from_rows({{0, 0}});
    CHECK_THROWS_AS(cross_entropy(logits, 2, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(logits, -1, nullptr), std::invalid_argument);
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(25);
    const Matrix logits = random_matrix(rng, 1, 4);
    Matrix g;
    cross_entropy(logits, 2, &g);
    const auto loss = [&](const Matrix& probe) {
      return cross_entropy(probe, 2, nullptr);
    };
    CHECK(relative_error(g, finite_difference_gradient(loss, logits)) < 1e-6);
  }
}

TEST_CASE("class probabilities are softmax of the logits") {
  const Matrix logits =
      Matrix::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}});
  const std::vector<double> probs = class_probabilities(logits);
  CHECK(std::abs(probs[0] - 1.0 / 6.0) < 1e-12);
  CHECK(std::abs(probs[1] - 2.0 / 6.0) < 1e-12);
  CHECK(std::abs(probs[2] - 3.0 / 6.0) < 1e-12);
}

TEST_CASE("mil backward matches finite differences") {
  Rng rng(26);
  const std::size_t n = 6, d = 4, h = 3, c = 3;
  MilParams p = random_mil(rng, d, h, c);
  const Matrix z = random_matrix(rng, n, d);
  const int label = 1;

  MilCache cache;
  Matrix g_logits;
  cross_entropy(mil_forward(z, p, &cache), label, &g_logits);
  MilGrads grads = make_mil_grads(p);
  const Matrix gz = mil_backward(g_logits, cache, p, &grads);

  const auto loss_z = [&](const Matrix& probe) {
    return cross_entropy(mil_forward(probe, p, nullptr), label, nullptr);
  };
  CHECK(relative_error(gz, finite_difference_gradient(loss_z, z)) < 1e-6);

  struct Slot {
    Matrix* value;
    const Matrix* grad;
  };
  const std::vector<Slot> slots = {{&p.att_v.value, &grads.att_v},
                                   {&p.att_u.value, &grads.att_u},
                                   {&p.att_w.value, &grads.att_w},
                                   {&p.cls_w.value, &grads.cls_w},
                                   {&p.cls_b.value, &grads.cls_b}};
  for (const Slot& s : slots) {
    const auto loss_p = [&](const Matrix& probe) {
      const Matrix keep = *s.value;
      *s.value = probe;
      const double v = cross_entropy(mil_forward(z, p, nullptr), label, nullptr);
      *s.value = keep;
      return v;
    };
    CHECK(relative_error(*s.grad,
                         finite_difference_gradient(loss_p, *s.value)) < 1e-6);
  }
}

TEST_CASE("mil head flop accounting matches the analytic formula") {
  Rng rng(27);
  const std::size_t n = 9, d = 5, h = 4, c = 3;
  MilParams p = random_mil(rng, d, h, c);
  const Matrix z = random_matrix(rng, n, d);

  reset_flops();
  {
    ComponentScope scope(Component::mil_head);
    mil_forward(z, p, nullptr);
  }
  CHECK(component_flops(Component::mil_head) ==
        abmil_flops(n, d, h) + classify_flops(d, c));
}
