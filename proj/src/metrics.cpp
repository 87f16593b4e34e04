#include "hgmamba/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace hgmamba {

double mann_whitney_auc(const std::vector<double>& scores,
                        const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("mann_whitney_auc: bad input sizes");
  }
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw std::invalid_argument("mann_whitney_auc: labels must be 0/1");
    }
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("mann_whitney_auc: single-class input");
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&scores](std::size_t a,
                                                     std::size_t b) {
    return scores[a] < scores[b];
  });

  // Midranks over tie groups, then the rank-sum statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

Metrics compute_metrics(const std::vector<std::vector<double>>& probs,
                        const std::vector<int>& labels,
                        std::size_t n_classes) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw std::invalid_argument("compute_metrics: bad input sizes");
  }
  if (n_classes < 2) {
    throw std::invalid_argument("compute_metrics: need >= 2 classes");
  }
  const std::size_t n = probs.size();

  Metrics m;
  m.n_classes = n_classes;
  m.n_samples = n;
  m.confusion.assign(n_classes * n_classes, 0);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (probs[i].size() != n_classes) {
      throw std::invalid_argument("compute_metrics: bad probability row");
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw std::invalid_argument("compute_metrics: label out of range");
    }
    std::size_t pred = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (probs[i][c] > probs[i][pred]) pred = c;
    }
    const std::size_t truth = static_cast<std::size_t>(labels[i]);
    m.confusion[truth * n_classes + pred] += 1;
    if (pred == truth) ++correct;
  }
  m.acc = static_cast<double>(correct) / static_cast<double>(n);

  // Macro F1 with the zero-division convention f1 = 0.
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = m.confusion[c * n_classes + c];
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[o * n_classes + c];
      fn += m.confusion[c * n_classes + o];
    }
    const std::size_t denom = 2 * tp + fp + fn;
    f1_sum += denom == 0 ? 0.0
                         : 2.0 * static_cast<double>(tp) /
                               static_cast<double>(denom);
  }
  m.macro_f1 = f1_sum / static_cast<double>(n_classes);

  // AUC: binary directly; macro one-vs-rest above two classes. Classes
  // missing a positive or negative side are skipped; if every class is
  // degenerate the AUC is reported absent.
  if (n_classes == 2) {
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l == 1);
    if (n_pos > 0 && n_pos < n) {
      std::vector<double> scores(n);
      for (std::size_t i = 0; i < n; ++i) scores[i] = probs[i][1];
      m.auc = mann_whitney_auc(scores, labels);
      m.has_auc = true;
    }
  } else {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t n_pos = 0;
      for (int l : labels) {
        n_pos += static_cast<std::size_t>(static_cast<std::size_t>(l) == c);
      }
      if (n_pos == 0 || n_pos == n) continue;
      std::vector<double> scores(n);
      std::vector<int> ovr(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = probs[i][c];
        ovr[i] = static_cast<std::size_t>(labels[i]) == c ? 1 : 0;
      }
      sum += mann_whitney_auc(scores, ovr);
      ++used;
    }
    if (used > 0) {
      m.auc = sum / static_cast<double>(used);
      m.has_auc = true;
    }
  }
  return m;
}

}  // namespace hgmamba
