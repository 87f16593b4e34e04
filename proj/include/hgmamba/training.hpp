#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgmamba/datakit.hpp"
#include "hgmamba/metrics.hpp"
#include "hgmamba/model.hpp"

namespace hgmamba {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  std::size_t epochs = 120;
  std::size_t batch_size = 12;
  std::vector<std::size_t> milestones = {60, 90};
  double gamma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-tensor first/second moments in visit_params order plus the shared
// step counter.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

AdamState make_adam_state(ModelParams& params);

// Bias-corrected Adam with decoupled weight decay:
//   theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
void adam_step(ModelParams& params, AdamState& state, double lr, double wd,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

void zero_grads(ModelParams& params);

// base_lr * gamma^(milestones passed, counting milestone <= epoch).
double lr_schedule(const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_auc = 0.0;  // NaN when absent
  double val_f1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams best_params;  // best validation AUC (ACC fallback)
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  std::vector<EpochRecord> history;
};

// Class-probability rows for every bag; scan sets are frozen per bag index
// (sub-seed of `seed`), so evaluation is deterministic and epoch-independent.
std::vector<std::vector<double>> predict_probs(
    const std::vector<TileBag>& bags, const ModelConfig& cfg,
    ModelParams& params, std::uint64_t seed);

Metrics evaluate(const std::vector<TileBag>& bags, const ModelConfig& cfg,
                 ModelParams& params, std::uint64_t seed);

// Full training run: per-epoch reshuffled bag order, gradient accumulation
// over batches of bags, scan sets resampled per (epoch, bag), validation
// after every epoch, best checkpoint retained.
TrainResult train(const Dataset& ds, const ModelConfig& mcfg,
                  const TrainConfig& tcfg);

std::string history_csv(const std::vector<EpochRecord>& history);

// Ablation baseline for the learning experiment: per-bag feature mean into
// a linear softmax head, trained with the same Adam settings.
Metrics train_eval_meanpool(const Dataset& ds, std::size_t n_classes,
                            const TrainConfig& tcfg);

}  // namespace hgmamba
