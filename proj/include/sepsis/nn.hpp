#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sepsis/events.hpp"
#include "sepsis/features.hpp"

namespace sepsis::nn {

// Row-major T x D buffer.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

struct ParamBlock {
  std::string name;
  std::vector<size_t> shape;
  size_t offset = 0;
  size_t size = 0;
};

class ParamLayout {
 public:
  size_t add(const std::string& name, std::vector<size_t> shape);
  size_t total() const { return total_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;

 private:
  std::vector<ParamBlock> blocks_;
  size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// standalone kernels
// ---------------------------------------------------------------------------

// Causal 1-D convolution: kernel 3, stride 1, left zero padding 2, so
// output[t] depends on input[max(0, t-2) .. t] only.
// weights layout: [tap][in][out], taps oldest first.
Matrix causal_conv1d(const Matrix& input, std::span<const double> weights,
                     std::span<const double> bias, int d_in, int d_out);

// Kernel 2 stride 2 max pooling over time; an odd trailing element forms its
// own window, so the output length is ceil(T / 2).
Matrix maxpool1d(const Matrix& input);

inline int64_t pooled_length(int64_t n, int n_pools) {
  for (int i = 0; i < n_pools; ++i) n = (n + 1) / 2;
  return n;
}

void softmax2(double z0, double z1, double& p0, double& p1);

// ---------------------------------------------------------------------------
// multilayer perceptron
// ---------------------------------------------------------------------------

struct MlpSpec {
  int input_width = 0;
  int hidden1 = 200;
  int hidden2 = 200;
  double dropout = 0.3;
};

struct MlpModel {
  MlpSpec spec;
  ParamLayout layout;
  std::vector<double> theta;

  static MlpModel create(const MlpSpec& spec, uint64_t seed);
  std::span<const double> block(const std::string& name) const;
};

// Cross-entropy loss for one sample; adds parameter gradients into grad
// (size layout.total()). Dropout applies only in train mode.
double mlp_loss_grad(const MlpModel& m, const events::SparseVector& x, int label,
                     std::span<double> grad, bool train_mode, uint64_t dropout_seed,
                     double* risk_out = nullptr);

// Deterministic inference risk (dropout off): positive-class probability.
double mlp_risk(const MlpModel& m, const events::SparseVector& x);

// ---------------------------------------------------------------------------
// CNN-LSTM
// ---------------------------------------------------------------------------

struct ConvBlockSpec {
  int ch1 = 64;
  int ch2 = 64;
};

struct CnnLstmSpec {
  int event_width = 0;
  int context_width = 0;
  int embed_dim = 1000;
  std::vector<ConvBlockSpec> blocks = {{128, 128}, {64, 64}, {64, 64}, {64, 64}, {64, 64}};
  int lstm_units = 64;

  int pool_stride() const { return 1 << blocks.size(); }
};

struct CnnLstmModel {
  CnnLstmSpec spec;
  ParamLayout layout;
  std::vector<double> theta;

  static CnnLstmModel create(const CnnLstmSpec& spec, uint64_t seed);
  std::span<const double> block(const std::string& name) const;
};

struct CnnStepRisks {
  std::vector<double> risks;          // one per LSTM step
  std::vector<int64_t> last_row;      // newest input row visible to each step
};

CnnStepRisks cnn_lstm_forward(const CnnLstmModel& m, const features::SequenceMatrix& input);

// Per-step cross entropy against a single admission label, averaged with the
// given step weights (empty means uniform). Later steps carry the most
// reliable supervision for a sequence-level label, so training usually ramps
// the weights linearly toward the end.
double cnn_loss_grad(const CnnLstmModel& m, const features::SequenceMatrix& input, int label,
                     std::span<double> grad, std::vector<double>* step_risks = nullptr,
                     std::span<const double> step_weights = {});

std::vector<double> linear_step_weights(size_t n_steps);

// ---------------------------------------------------------------------------
// gradient verification
// ---------------------------------------------------------------------------

// Central finite differences against the analytic gradient over every
// parameter. loss_grad must evaluate the loss at the current theta and add
// gradients into its argument. Relative error uses a small denominator floor
// to keep finite-difference noise on near-zero entries from dominating.
double grad_check(std::vector<double>& theta,
                  const std::function<double(std::span<double>)>& loss_grad,
                  double eps = 1e-4);

void glorot_fill(std::span<double> w, size_t fan_in, size_t fan_out, Rng& rng);

}  // namespace sepsis::nn
