#include "hgmamba/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "hgmamba/rng.hpp"

namespace hgmamba {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal Adam over loose matrices, shared by the mean-pool baseline.
struct FlatAdam {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

void flat_adam_step(std::vector<Matrix*> params,
                    const std::vector<Matrix*>& grads, FlatAdam& state,
                    double lr, double wd) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  state.step += 1;
  const double b1c = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double b2c = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (std::size_t r = 0; r < p.rows(); ++r) {
      for (std::size_t c = 0; c < p.cols(); ++c) {
        const double gv = g(r, c);
        m(r, c) = beta1 * m(r, c) + (1.0 - beta1) * gv;
        v(r, c) = beta2 * v(r, c) + (1.0 - beta2) * gv * gv;
        const double mhat = m(r, c) / b1c;
        const double vhat = v(r, c) / b2c;
        p(r, c) -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p(r, c));
      }
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (weight_decay < 0.0) {
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  }
  if (epochs < 1) throw std::invalid_argument("train config: epochs >= 1");
  if (batch_size < 1) {
    throw std::invalid_argument("train config: batch_size >= 1");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("train config: gamma > 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= epochs) {
      throw std::invalid_argument("train config: milestone past epochs");
    }
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument(
          "train config: milestones must be strictly increasing");
    }
  }
}

AdamState make_adam_state(ModelParams& params) {
  AdamState state;
  visit_params(params, [&state](const std::string&, GradSlot& slot) {
    state.m.emplace_back(slot.value.rows(), slot.value.cols());
    state.v.emplace_back(slot.value.rows(), slot.value.cols());
  });
  return state;
}

void adam_step(ModelParams& params, AdamState& state, double lr, double wd,
               double beta1, double beta2, double eps) {
  state.step += 1;
  const double b1c = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double b2c = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  visit_params(params, [&](const std::string&, GradSlot& slot) {
    if (i >= state.m.size()) {
      throw std::logic_error("adam_step: state/parameter mismatch");
    }
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (std::size_t r = 0; r < slot.value.rows(); ++r) {
      for (std::size_t c = 0; c < slot.value.cols(); ++c) {
        const double g = slot.grad(r, c);
        m(r, c) = beta1 * m(r, c) + (1.0 - beta1) * g;
        v(r, c) = beta2 * v(r, c) + (1.0 - beta2) * g * g;
        const double mhat = m(r, c) / b1c;
        const double vhat = v(r, c) / b2c;
        slot.value(r, c) -=
            lr * (mhat / (std::sqrt(vhat) + eps) + wd * slot.value(r, c));
      }
    }
    ++i;
  });
}

void zero_grads(ModelParams& params) {
  visit_params(params,
               [](const std::string&, GradSlot& slot) { slot.zero_grad(); });
}

double lr_schedule(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (std::size_t m : cfg.milestones) {
    if (m <= epoch) lr *= cfg.gamma;
  }
  return lr;
}

std::vector<std::vector<double>> predict_probs(
    const std::vector<TileBag>& bags, const ModelConfig& cfg,
    ModelParams& params, std::uint64_t seed) {
  std::vector<std::vector<double>> probs;
  probs.reserve(bags.size());
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const Matrix logits = model_forward_seeded(
        bags[i], cfg, params, derive_seed(seed, "eval.scan", i), nullptr);
    probs.push_back(class_probabilities(logits));
  }
  return probs;
}

Metrics evaluate(const std::vector<TileBag>& bags, const ModelConfig& cfg,
                 ModelParams& params, std::uint64_t seed) {
  if (bags.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto probs = predict_probs(bags, cfg, params, seed);
  std::vector<int> labels(bags.size());
  for (std::size_t i = 0; i < bags.size(); ++i) labels[i] = bags[i].label;
  return compute_metrics(probs, labels, cfg.n_classes);
}

TrainResult train(const Dataset& ds, const ModelConfig& mcfg,
                  const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (ds.train.empty()) throw std::invalid_argument("train: no training bags");

  const std::size_t n_train = ds.train.size();
  std::vector<Hypergraph> graphs;
  graphs.reserve(n_train);
  for (const TileBag& bag : ds.train) {
    graphs.push_back(build_bag_hypergraph(bag, mcfg.top_k));
  }

  ModelParams params = init_params(mcfg, tcfg.seed);
  AdamState adam = make_adam_state(params);

  TrainResult result;
  result.best_params = params;
  result.best_score = -1.0;
  result.best_epoch = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = lr_schedule(tcfg, epoch);
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    {
      Rng shuffle_rng(derive_seed(tcfg.seed, "train.order", epoch));
      shuffle_rng.shuffle(order);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += tcfg.batch_size) {
      const std::size_t end = std::min(n_train, start + tcfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto scans = draw_scan_sets(
            graphs[idx], mcfg,
            derive_seed(tcfg.seed, "train.scan", epoch * n_train + idx));
        loss_sum += model_loss_and_backward(ds.train[idx], mcfg, params,
                                            graphs[idx], scans, scale);
      }
      adam_step(params, adam, lr, tcfg.weight_decay);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_train);
    rec.lr = lr;
    rec.val_acc = nan_value();
    rec.val_auc = nan_value();
    rec.val_f1 = nan_value();
    if (!ds.val.empty()) {
      const Metrics val = evaluate(ds.val, mcfg, params, tcfg.seed);
      rec.val_acc = val.acc;
      rec.val_f1 = val.macro_f1;
      if (val.has_auc) rec.val_auc = val.auc;
      const double score = val.has_auc ? val.auc : val.acc;
      if (score > result.best_score) {
        result.best_score = score;
        result.best_epoch = epoch;
        result.best_params = params;
      }
    } else {
      result.best_params = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_acc,val_auc,val_f1,lr\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch);
    out += ',';
    out += fmt_double(r.train_loss);
    out += ',';
    out += fmt_double(r.val_acc);
    out += ',';
    out += fmt_double(r.val_auc);
    out += ',';
    out += fmt_double(r.val_f1);
    out += ',';
    out += fmt_double(r.lr);
    out += '\n';
  }
  return out;
}

Metrics train_eval_meanpool(const Dataset& ds, std::size_t n_classes,
                            const TrainConfig& tcfg) {
  tcfg.validate();
  if (ds.train.empty() || ds.test.empty()) {
    throw std::invalid_argument("train_eval_meanpool: missing splits");
  }
  const std::size_t d = ds.train.front().features.cols();

  const auto bag_mean = [d](const TileBag& bag) {
    Matrix mu(1, d);
    for (std::size_t i = 0; i < bag.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) mu(0, j) += bag.features(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) {
      mu(0, j) /= static_cast<double>(bag.size());
    }
    return mu;
  };

  std::vector<Matrix> train_mu;
  train_mu.reserve(ds.train.size());
  for (const TileBag& bag : ds.train) train_mu.push_back(bag_mean(bag));

  Matrix w(d, n_classes);
  Matrix b(1, n_classes);
  FlatAdam adam;
  adam.m = {Matrix(d, n_classes), Matrix(1, n_classes)};
  adam.v = {Matrix(d, n_classes), Matrix(1, n_classes)};

  const std::size_t n_train = ds.train.size();
  Matrix best_w = w;
  Matrix best_b = b;
  double best_score = -1.0;

  const auto eval_split = [&](const std::vector<TileBag>& bags,
                              const Matrix& wm, const Matrix& bm) {
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    probs.reserve(bags.size());
    for (const TileBag& bag : bags) {
      Matrix logits = matmul(bag_mean(bag), wm);
      for (std::size_t c = 0; c < n_classes; ++c) logits(0, c) += bm(0, c);
      probs.push_back(class_probabilities(logits));
      labels.push_back(bag.label);
    }
    return compute_metrics(probs, labels, n_classes);
  };

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = lr_schedule(tcfg, epoch);
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(tcfg.seed, "meanpool.order", epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < n_train; start += tcfg.batch_size) {
      const std::size_t end = std::min(n_train, start + tcfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      Matrix gw(d, n_classes);
      Matrix gb(1, n_classes);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        Matrix logits = matmul(train_mu[idx], w);
        for (std::size_t c = 0; c < n_classes; ++c) logits(0, c) += b(0, c);
        Matrix g_logits;
        cross_entropy(logits, ds.train[idx].label, &g_logits);
        for (std::size_t c = 0; c < n_classes; ++c) {
          const double g = g_logits(0, c) * scale;
          gb(0, c) += g;
          for (std::size_t j = 0; j < d; ++j) {
            gw(j, c) += train_mu[idx](0, j) * g;
          }
        }
      }
      flat_adam_step({&w, &b}, {&gw, &gb}, adam, lr, tcfg.weight_decay);
    }

    if (!ds.val.empty()) {
      const Metrics val = eval_split(ds.val, w, b);
      const double score = val.has_auc ? val.auc : val.acc;
      if (score > best_score) {
        best_score = score;
        best_w = w;
        best_b = b;
      }
    } else {
      best_w = w;
      best_b = b;
    }
  }
  return eval_split(ds.test, best_w, best_b);
}

}  // namespace hgmamba
