#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace sepsis::nn {

struct TrainConfig {
  int batch_size = 50;
  double lr = 1e-4;
  int epochs = 10;
  uint64_t seed = 0;
  int early_stop_patience = 5;
  int workers = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  size_t max_batches_per_epoch = 0;  // 0 means the full training set
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auroc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_auroc = 0.0;
  std::vector<double> best_theta;
};

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

class Adam {
 public:
  Adam(size_t n, double lr, double beta1, double beta2, double eps);
  void step(std::span<double> theta, std::span<const double> grad);

 private:
  std::vector<double> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// sample_loss_grad(index, grad, rng_seed) evaluates one training sample at
// the current theta, adding gradients into grad. validate() scores the
// held-out set and returns (loss, AUROC); the best-AUROC parameters are
// returned. Per-sample gradients are accumulated in fixed index order over
// fixed-size chunks, so the result is identical for any worker count.
TrainResult train_loop(
    std::vector<double>& theta, size_t n_samples, const TrainConfig& cfg,
    const std::function<double(size_t, std::span<double>, uint64_t)>& sample_loss_grad,
    const std::function<std::pair<double, double>()>& validate);

}  // namespace sepsis::nn
