#pragma once

#include <cstddef>
#include <vector>

#include "hgmamba/matrix.hpp"

namespace hgmamba {

// Gated attention pooling over instances followed by a linear classifier.
struct MilParams {
  GradSlot att_v;  // d x h, tanh path
  GradSlot att_u;  // d x h, sigmoid gate path
  GradSlot att_w;  // h x 1, gated hidden -> attention score
  GradSlot cls_w;  // d x n_classes
  GradSlot cls_b;  // 1 x n_classes

  std::size_t dim() const { return att_v.value.rows(); }
  std::size_t hidden() const { return att_v.value.cols(); }
  std::size_t n_classes() const { return cls_w.value.cols(); }
};

struct MilCache {
  Matrix z;     // N x d instance features
  Matrix tv;    // N x h, tanh(z att_v)
  Matrix gu;    // N x h, sigmoid(z att_u)
  Matrix attn;  // N x 1, softmax attention weights
  Matrix bag;   // 1 x d, attention-weighted sum
};

struct MilGrads {
  Matrix att_v;
  Matrix att_u;
  Matrix att_w;
  Matrix cls_w;
  Matrix cls_b;
};

// score_i = att_w^T (tanh(att_v^T z_i) * sigmoid(att_u^T z_i)),
// attn = softmax(score), bag = sum_i attn_i z_i, logits = bag cls_w + cls_b.
// Returns 1 x n_classes logits.
Matrix mil_forward(const Matrix& z, const MilParams& p, MilCache* cache);

// Returns dL/dz given dL/dlogits; accumulates parameter grads into *grads.
Matrix mil_backward(const Matrix& g_logits, const MilCache& cache,
                    const MilParams& p, MilGrads* grads);

MilGrads make_mil_grads(const MilParams& p);

// Stable softmax cross-entropy of a single 1 x C logits row; writes
// dL/dlogits (softmax - onehot) into *g_logits when non-null.
double cross_entropy(const Matrix& logits, int label, Matrix* g_logits);

// Class probabilities of a 1 x C logits row.
std::vector<double> class_probabilities(const Matrix& logits);

}  // namespace hgmamba
