#pragma once

#include <cstddef>
#include <vector>

namespace hgmamba {

struct Metrics {
  double acc = 0.0;
  double macro_f1 = 0.0;
  bool has_auc = false;  // false when a split is single-class
  double auc = 0.0;      // binary Mann-Whitney; macro one-vs-rest for C > 2
  std::size_t n_classes = 0;
  std::size_t n_samples = 0;
  std::vector<std::size_t> confusion;  // C x C row-major, row = true class
};

// Mann-Whitney AUC with midranks for ties; labels are 0/1 and both classes
// must be present.
double mann_whitney_auc(const std::vector<double>& scores,
                        const std::vector<int>& labels);

// probs[i] is the class-probability row of sample i (length n_classes);
// predictions are argmax (lowest index wins ties).
Metrics compute_metrics(const std::vector<std::vector<double>>& probs,
                        const std::vector<int>& labels,
                        std::size_t n_classes);

}  // namespace hgmamba
