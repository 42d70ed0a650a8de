#include "sepsis/train.hpp"

#include <algorithm>
#include <cmath>

#include "sepsis/util.hpp"

namespace sepsis::nn {

Adam::Adam(size_t n, double lr, double beta1, double beta2, double eps)
    : m_(n, 0.0), v_(n, 0.0), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<double> theta, std::span<const double> grad) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < theta.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    theta[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

TrainResult train_loop(
    std::vector<double>& theta, size_t n_samples, const TrainConfig& cfg,
    const std::function<double(size_t, std::span<double>, uint64_t)>& sample_loss_grad,
    const std::function<std::pair<double, double>()>& validate) {
  if (n_samples == 0) throw std::runtime_error("empty training set");
  TrainResult result;
  Adam adam(theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  // fixed chunking keeps the floating point reduction order independent of
  // the worker count
  constexpr size_t kChunk = 8;

  std::vector<size_t> order(n_samples);
  for (size_t i = 0; i < n_samples; ++i) order[i] = i;

  std::vector<double> grad(theta.size(), 0.0);
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x1000 + static_cast<uint64_t>(epoch)));
    for (size_t i = n_samples; i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    size_t seen = 0;
    size_t n_batches = (n_samples + static_cast<size_t>(cfg.batch_size) - 1) /
                       static_cast<size_t>(cfg.batch_size);
    if (cfg.max_batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.max_batches_per_epoch);

    for (size_t batch = 0; batch < n_batches; ++batch) {
      const size_t lo = batch * static_cast<size_t>(cfg.batch_size);
      const size_t hi = std::min(n_samples, lo + static_cast<size_t>(cfg.batch_size));
      const size_t bsz = hi - lo;
      const size_t n_chunks = (bsz + kChunk - 1) / kChunk;

      std::vector<std::vector<double>> chunk_grads(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      parallel_for(n_chunks, cfg.workers, [&](size_t c) {
        chunk_grads[c].assign(theta.size(), 0.0);
        const size_t a = lo + c * kChunk;
        const size_t b = std::min(hi, a + kChunk);
        for (size_t s = a; s < b; ++s) {
          const uint64_t sample_seed =
              mix_seed(cfg.seed, (static_cast<uint64_t>(epoch) << 32) | static_cast<uint64_t>(s));
          chunk_loss[c] += sample_loss_grad(order[s], chunk_grads[c], sample_seed);
        }
      });

      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (size_t c = 0; c < n_chunks; ++c) {
        batch_loss += chunk_loss[c];
        for (size_t i = 0; i < grad.size(); ++i) grad[i] += chunk_grads[c][i];
      }
      const double inv = 1.0 / static_cast<double>(bsz);
      for (double& gv : grad) gv *= inv;
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("training loss is not finite at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch));
      epoch_loss += batch_loss * static_cast<double>(bsz);
      seen += bsz;
      adam.step(theta, grad);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0;
    auto [val_loss, val_auroc] = validate();
    stats.val_loss = val_loss;
    stats.val_auroc = val_auroc;
    result.history.push_back(stats);

    if (result.best_epoch < 0 || val_auroc > result.best_val_auroc) {
      result.best_epoch = epoch;
      result.best_val_auroc = val_auroc;
      result.best_theta = theta;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
      break;
    }
  }
  if (result.best_theta.empty()) result.best_theta = theta;
  return result;
}

}  // namespace sepsis::nn
