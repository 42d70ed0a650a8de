#include "sepsis/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sepsis/util.hpp"

namespace sepsis::nn {

size_t ParamLayout::add(const std::string& name, std::vector<size_t> shape) {
  ParamBlock b;
  b.name = name;
  b.shape = std::move(shape);
  b.size = 1;
  for (size_t d : b.shape) b.size *= d;
  b.offset = total_;
  total_ += b.size;
  blocks_.push_back(b);
  return b.offset;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::runtime_error("unknown parameter block: " + name);
}

void glorot_fill(std::span<double> w, size_t fan_in, size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

Matrix causal_conv1d(const Matrix& input, std::span<const double> weights,
                     std::span<const double> bias, int d_in, int d_out) {
  if (input.cols != static_cast<size_t>(d_in))
    throw std::runtime_error("causal_conv1d: input width mismatch");
  if (weights.size() != static_cast<size_t>(3 * d_in * d_out) ||
      bias.size() != static_cast<size_t>(d_out))
    throw std::runtime_error("causal_conv1d: weight shape mismatch");
  const size_t T = input.rows;
  Matrix out(T, static_cast<size_t>(d_out));
  for (size_t t = 0; t < T; ++t) {
    double* o = out.row(t);
    for (int j = 0; j < d_out; ++j) o[j] = bias[static_cast<size_t>(j)];
    for (int k = 0; k < 3; ++k) {
      const int64_t src = static_cast<int64_t>(t) - 2 + k;
      if (src < 0) continue;  // left zero padding
      const double* x = input.row(static_cast<size_t>(src));
      const double* wk = weights.data() + static_cast<size_t>(k * d_in * d_out);
      for (int i = 0; i < d_in; ++i) {
        const double xv = x[i];
        if (xv == 0.0) continue;
        const double* wrow = wk + static_cast<size_t>(i) * static_cast<size_t>(d_out);
        for (int j = 0; j < d_out; ++j) o[j] += wrow[static_cast<size_t>(j)] * xv;
      }
    }
  }
  return out;
}

Matrix maxpool1d(const Matrix& input) {
  const size_t T = input.rows;
  const size_t out_t = (T + 1) / 2;
  Matrix out(out_t, input.cols);
  for (size_t p = 0; p < out_t; ++p) {
    const size_t a = 2 * p;
    const size_t b = 2 * p + 1;
    const double* ra = input.row(a);
    double* o = out.row(p);
    if (b < T) {
      const double* rb = input.row(b);
      for (size_t c = 0; c < input.cols; ++c) o[c] = std::max(ra[c], rb[c]);
    } else {
      for (size_t c = 0; c < input.cols; ++c) o[c] = ra[c];  // lone trailing step
    }
  }
  return out;
}

void softmax2(double z0, double z1, double& p0, double& p1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m);
  const double e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  p0 = e0 / s;
  p1 = e1 / s;
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

MlpModel MlpModel::create(const MlpSpec& spec, uint64_t seed) {
  if (spec.input_width <= 0) throw std::runtime_error("mlp input width must be positive");
  MlpModel m;
  m.spec = spec;
  const size_t in = static_cast<size_t>(spec.input_width);
  const size_t h1 = static_cast<size_t>(spec.hidden1);
  const size_t h2 = static_cast<size_t>(spec.hidden2);
  m.layout.add("w1", {in, h1});
  m.layout.add("b1", {h1});
  m.layout.add("w2", {h1, h2});
  m.layout.add("b2", {h2});
  m.layout.add("w3", {h2, 2});
  m.layout.add("b3", {2});
  m.theta.assign(m.layout.total(), 0.0);
  Rng rng(mix_seed(seed, 0x6d6c70));
  auto fill = [&](const char* name, size_t fi, size_t fo) {
    const ParamBlock& b = m.layout.block(name);
    glorot_fill({m.theta.data() + b.offset, b.size}, fi, fo, rng);
  };
  fill("w1", in, h1);
  fill("w2", h1, h2);
  fill("w3", h2, 2);
  return m;
}

std::span<const double> MlpModel::block(const std::string& name) const {
  const ParamBlock& b = layout.block(name);
  return {theta.data() + b.offset, b.size};
}

namespace {

struct MlpOffsets {
  size_t w1, b1, w2, b2, w3, b3;
};

MlpOffsets mlp_offsets(const MlpModel& m) {
  return {m.layout.block("w1").offset, m.layout.block("b1").offset,
          m.layout.block("w2").offset, m.layout.block("b2").offset,
          m.layout.block("w3").offset, m.layout.block("b3").offset};
}

// keep-mask with inverted scaling; zero rate keeps everything
void dropout_mask(std::vector<double>& mask, double rate, Rng& rng) {
  if (rate <= 0.0) {
    std::fill(mask.begin(), mask.end(), 1.0);
    return;
  }
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : mask) v = rng.bernoulli(rate) ? 0.0 : scale;
}

}  // namespace

double mlp_loss_grad(const MlpModel& m, const events::SparseVector& x, int label,
                     std::span<double> grad, bool train_mode, uint64_t dropout_seed,
                     double* risk_out) {
  if (x.size != m.spec.input_width)
    throw std::runtime_error("mlp input width mismatch");
  const MlpOffsets off = mlp_offsets(m);
  const int h1 = m.spec.hidden1;
  const int h2 = m.spec.hidden2;
  const double* theta = m.theta.data();

  std::vector<double> z1(static_cast<size_t>(h1), 0.0);
  for (int j = 0; j < h1; ++j) z1[(size_t)j] = theta[off.b1 + (size_t)j];
  for (const auto& [i, v] : x.items) {
    const double* wrow = theta + off.w1 + static_cast<size_t>(i) * static_cast<size_t>(h1);
    for (int j = 0; j < h1; ++j) z1[(size_t)j] += wrow[j] * v;
  }
  std::vector<double> a1(static_cast<size_t>(h1));
  for (int j = 0; j < h1; ++j) a1[(size_t)j] = std::max(0.0, z1[(size_t)j]);

  Rng drop_rng(dropout_seed);
  std::vector<double> mask1(static_cast<size_t>(h1), 1.0);
  std::vector<double> mask2(static_cast<size_t>(h2), 1.0);
  if (train_mode) {
    dropout_mask(mask1, m.spec.dropout, drop_rng);
    dropout_mask(mask2, m.spec.dropout, drop_rng);
    for (int j = 0; j < h1; ++j) a1[(size_t)j] *= mask1[(size_t)j];
  }

  std::vector<double> z2(static_cast<size_t>(h2), 0.0);
  for (int k = 0; k < h2; ++k) z2[(size_t)k] = theta[off.b2 + (size_t)k];
  for (int j = 0; j < h1; ++j) {
    const double aj = a1[(size_t)j];
    if (aj == 0.0) continue;
    const double* wrow = theta + off.w2 + static_cast<size_t>(j) * static_cast<size_t>(h2);
    for (int k = 0; k < h2; ++k) z2[(size_t)k] += wrow[k] * aj;
  }
  std::vector<double> a2(static_cast<size_t>(h2));
  for (int k = 0; k < h2; ++k) a2[(size_t)k] = std::max(0.0, z2[(size_t)k]);
  if (train_mode)
    for (int k = 0; k < h2; ++k) a2[(size_t)k] *= mask2[(size_t)k];

  double logits[2] = {theta[off.b3], theta[off.b3 + 1]};
  for (int k = 0; k < h2; ++k) {
    const double ak = a2[(size_t)k];
    if (ak == 0.0) continue;
    logits[0] += theta[off.w3 + static_cast<size_t>(2 * k)] * ak;
    logits[1] += theta[off.w3 + static_cast<size_t>(2 * k + 1)] * ak;
  }
  double p0, p1;
  softmax2(logits[0], logits[1], p0, p1);
  if (risk_out) *risk_out = p1;
  const double p_true = label ? p1 : p0;
  const double loss = -std::log(std::max(p_true, 1e-300));

  if (grad.empty()) return loss;
  if (grad.size() != m.layout.total()) throw std::runtime_error("mlp grad size mismatch");
  double* g = grad.data();

  const double dlog[2] = {p0 - (label ? 0.0 : 1.0), p1 - (label ? 1.0 : 0.0)};
  g[off.b3] += dlog[0];
  g[off.b3 + 1] += dlog[1];
  std::vector<double> da2(static_cast<size_t>(h2), 0.0);
  for (int k = 0; k < h2; ++k) {
    const double ak = a2[(size_t)k];
    g[off.w3 + (size_t)(2 * k)] += ak * dlog[0];
    g[off.w3 + (size_t)(2 * k + 1)] += ak * dlog[1];
    da2[(size_t)k] = theta[off.w3 + (size_t)(2 * k)] * dlog[0] +
                     theta[off.w3 + (size_t)(2 * k + 1)] * dlog[1];
  }
  std::vector<double> dz2(static_cast<size_t>(h2), 0.0);
  for (int k = 0; k < h2; ++k) {
    double d = da2[(size_t)k];
    if (train_mode) d *= mask2[(size_t)k];
    dz2[(size_t)k] = z2[(size_t)k] > 0.0 ? d : 0.0;
    g[off.b2 + (size_t)k] += dz2[(size_t)k];
  }
  std::vector<double> da1(static_cast<size_t>(h1), 0.0);
  for (int j = 0; j < h1; ++j) {
    const double aj = a1[(size_t)j];
    double* wg = g + off.w2 + static_cast<size_t>(j) * static_cast<size_t>(h2);
    const double* wrow = theta + off.w2 + static_cast<size_t>(j) * static_cast<size_t>(h2);
    double acc = 0.0;
    for (int k = 0; k < h2; ++k) {
      wg[k] += aj * dz2[(size_t)k];
      acc += wrow[k] * dz2[(size_t)k];
    }
    da1[(size_t)j] = acc;
  }
  std::vector<double> dz1(static_cast<size_t>(h1), 0.0);
  for (int j = 0; j < h1; ++j) {
    double d = da1[(size_t)j];
    if (train_mode) d *= mask1[(size_t)j];
    dz1[(size_t)j] = z1[(size_t)j] > 0.0 ? d : 0.0;
    g[off.b1 + (size_t)j] += dz1[(size_t)j];
  }
  for (const auto& [i, v] : x.items) {
    double* wg = g + off.w1 + static_cast<size_t>(i) * static_cast<size_t>(h1);
    for (int j = 0; j < h1; ++j) wg[j] += v * dz1[(size_t)j];
  }
  return loss;
}

double mlp_risk(const MlpModel& m, const events::SparseVector& x) {
  double risk = 0.0;
  mlp_loss_grad(m, x, 0, {}, false, 0, &risk);
  return risk;
}

// ---------------------------------------------------------------------------
// CNN-LSTM
// ---------------------------------------------------------------------------

CnnLstmModel CnnLstmModel::create(const CnnLstmSpec& spec, uint64_t seed) {
  if (spec.event_width <= 0) throw std::runtime_error("cnn event width must be positive");
  CnnLstmModel m;
  m.spec = spec;
  const size_t kev = static_cast<size_t>(spec.event_width);
  const size_t c = static_cast<size_t>(spec.context_width);
  const size_t d = static_cast<size_t>(spec.embed_dim);
  m.layout.add("embed_w", {kev, d});
  m.layout.add("embed_ctx", {std::max<size_t>(c, 1), d});
  m.layout.add("embed_b", {d});
  int d_in = spec.embed_dim;
  for (size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& blk = spec.blocks[b];
    m.layout.add("conv" + std::to_string(b) + "a_w",
                 {3, static_cast<size_t>(d_in), static_cast<size_t>(blk.ch1)});
    m.layout.add("conv" + std::to_string(b) + "a_b", {static_cast<size_t>(blk.ch1)});
    m.layout.add("conv" + std::to_string(b) + "b_w",
                 {3, static_cast<size_t>(blk.ch1), static_cast<size_t>(blk.ch2)});
    m.layout.add("conv" + std::to_string(b) + "b_b", {static_cast<size_t>(blk.ch2)});
    d_in = blk.ch2;
  }
  const size_t h = static_cast<size_t>(spec.lstm_units);
  m.layout.add("lstm_wx", {static_cast<size_t>(d_in), 4 * h});
  m.layout.add("lstm_wh", {h, 4 * h});
  m.layout.add("lstm_b", {4 * h});
  m.layout.add("lstm_h0", {h});
  m.layout.add("lstm_c0", {h});
  m.layout.add("out_w", {h, 2});
  m.layout.add("out_b", {2});

  m.theta.assign(m.layout.total(), 0.0);
  Rng rng(mix_seed(seed, 0x636e6e));
  auto fill = [&](const std::string& name, size_t fi, size_t fo) {
    const ParamBlock& b = m.layout.block(name);
    glorot_fill({m.theta.data() + b.offset, b.size}, fi, fo, rng);
  };
  fill("embed_w", kev, d);
  if (c > 0) fill("embed_ctx", c, d);
  d_in = spec.embed_dim;
  for (size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& blk = spec.blocks[b];
    fill("conv" + std::to_string(b) + "a_w", static_cast<size_t>(3 * d_in),
         static_cast<size_t>(blk.ch1));
    fill("conv" + std::to_string(b) + "b_w", static_cast<size_t>(3 * blk.ch1),
         static_cast<size_t>(blk.ch2));
    d_in = blk.ch2;
  }
  fill("lstm_wx", static_cast<size_t>(d_in), 4 * h);
  fill("lstm_wh", h, 4 * h);
  fill("out_w", h, 2);
  // forget-gate bias starts at one; the cell path stays zero so an all-zero
  // input still carries a zero state
  {
    const ParamBlock& b = m.layout.block("lstm_b");
    for (size_t j = 0; j < h; ++j) m.theta[b.offset + h + j] = 1.0;
  }
  return m;
}

std::span<const double> CnnLstmModel::block(const std::string& name) const {
  const ParamBlock& b = layout.block(name);
  return {theta.data() + b.offset, b.size};
}

namespace {

struct CnnTrace {
  Matrix embedded;                  // N x D
  std::vector<Matrix> conv_pre;     // per conv layer, pre-ReLU
  std::vector<Matrix> conv_post;    // per conv layer, post-ReLU
  std::vector<Matrix> pool_out;     // per block
  // lstm per-step caches
  Matrix gates;   // T x 4H, post-activation (i, f, g, o)
  Matrix cells;   // T x H
  Matrix tanh_c;  // T x H
  Matrix hidden;  // T x H
  std::vector<double> p1;  // per-step positive-class probability
};

void relu_inplace(Matrix& m) {
  for (double& v : m.data) v = std::max(0.0, v);
}

void lstm_forward(const CnnLstmModel& m, const Matrix& x, CnnTrace& tr) {
  const size_t h = static_cast<size_t>(m.spec.lstm_units);
  const size_t T = x.rows;
  const size_t din = x.cols;
  const double* wx = m.block("lstm_wx").data();
  const double* wh = m.block("lstm_wh").data();
  const double* b = m.block("lstm_b").data();
  const double* h0 = m.block("lstm_h0").data();
  const double* c0 = m.block("lstm_c0").data();

  tr.gates = Matrix(T, 4 * h);
  tr.cells = Matrix(T, h);
  tr.tanh_c = Matrix(T, h);
  tr.hidden = Matrix(T, h);

  std::vector<double> z(4 * h);
  for (size_t t = 0; t < T; ++t) {
    for (size_t j = 0; j < 4 * h; ++j) z[j] = b[j];
    const double* xt = x.row(t);
    for (size_t i = 0; i < din; ++i) {
      const double xv = xt[i];
      if (xv == 0.0) continue;
      const double* wrow = wx + i * 4 * h;
      for (size_t j = 0; j < 4 * h; ++j) z[j] += wrow[j] * xv;
    }
    const double* h_prev = t == 0 ? h0 : tr.hidden.row(t - 1);
    for (size_t i = 0; i < h; ++i) {
      const double hv = h_prev[i];
      if (hv == 0.0) continue;
      const double* wrow = wh + i * 4 * h;
      for (size_t j = 0; j < 4 * h; ++j) z[j] += wrow[j] * hv;
    }
    const double* c_prev = t == 0 ? c0 : tr.cells.row(t - 1);
    double* gates = tr.gates.row(t);
    double* cell = tr.cells.row(t);
    double* tc = tr.tanh_c.row(t);
    double* hid = tr.hidden.row(t);
    for (size_t j = 0; j < h; ++j) {
      const double gi = 1.0 / (1.0 + std::exp(-z[j]));
      const double gf = 1.0 / (1.0 + std::exp(-z[h + j]));
      const double gg = std::tanh(z[2 * h + j]);
      const double go = 1.0 / (1.0 + std::exp(-z[3 * h + j]));
      gates[j] = gi;
      gates[h + j] = gf;
      gates[2 * h + j] = gg;
      gates[3 * h + j] = go;
      cell[j] = gf * c_prev[j] + gi * gg;
      tc[j] = std::tanh(cell[j]);
      hid[j] = go * tc[j];
    }
  }
}

void cnn_forward_trace(const CnnLstmModel& m, const features::SequenceMatrix& input,
                       CnnTrace& tr) {
  const CnnLstmSpec& spec = m.spec;
  if (input.event_width != spec.event_width || input.context_width() != spec.context_width)
    throw std::runtime_error("sequence matrix width does not match the model spec");
  const size_t N = static_cast<size_t>(input.n_rows());
  const size_t d = static_cast<size_t>(spec.embed_dim);

  // context contribution is the same for every row
  std::vector<double> ctx_embed(d, 0.0);
  {
    const double* w_ctx = m.block("embed_ctx").data();
    const double* b = m.block("embed_b").data();
    for (size_t j = 0; j < d; ++j) ctx_embed[j] = b[j];
    for (int c = 0; c < spec.context_width; ++c) {
      const double v = input.context[static_cast<size_t>(c)];
      if (v == 0.0) continue;
      const double* wrow = w_ctx + static_cast<size_t>(c) * d;
      for (size_t j = 0; j < d; ++j) ctx_embed[j] += wrow[j] * v;
    }
  }
  tr.embedded = Matrix(N, d);
  const double* w_ev = m.block("embed_w").data();
  for (size_t r = 0; r < N; ++r) {
    double* o = tr.embedded.row(r);
    std::copy(ctx_embed.begin(), ctx_embed.end(), o);
    for (const auto& [i, v] : input.rows[r]) {
      const double* wrow = w_ev + static_cast<size_t>(i) * d;
      for (size_t j = 0; j < d; ++j) o[j] += wrow[j] * v;
    }
  }

  const Matrix* cur = &tr.embedded;
  int d_in = spec.embed_dim;
  tr.conv_pre.clear();
  tr.conv_post.clear();
  tr.pool_out.clear();
  for (size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& blk = spec.blocks[b];
    const std::string tag = "conv" + std::to_string(b);
    Matrix pre1 = causal_conv1d(*cur, m.block(tag + "a_w"), m.block(tag + "a_b"), d_in, blk.ch1);
    tr.conv_pre.push_back(pre1);
    relu_inplace(pre1);
    tr.conv_post.push_back(std::move(pre1));
    Matrix pre2 = causal_conv1d(tr.conv_post.back(), m.block(tag + "b_w"), m.block(tag + "b_b"),
                                blk.ch1, blk.ch2);
    tr.conv_pre.push_back(pre2);
    relu_inplace(pre2);
    tr.conv_post.push_back(std::move(pre2));
    tr.pool_out.push_back(maxpool1d(tr.conv_post.back()));
    cur = &tr.pool_out.back();
    d_in = blk.ch2;
  }

  lstm_forward(m, *cur, tr);

  const size_t T = tr.hidden.rows;
  const double* ow = m.block("out_w").data();
  const double* ob = m.block("out_b").data();
  const size_t h = static_cast<size_t>(spec.lstm_units);
  tr.p1.assign(T, 0.0);
  for (size_t t = 0; t < T; ++t) {
    const double* hid = tr.hidden.row(t);
    double z0 = ob[0], z1 = ob[1];
    for (size_t j = 0; j < h; ++j) {
      z0 += ow[2 * j] * hid[j];
      z1 += ow[2 * j + 1] * hid[j];
    }
    double p0;
    softmax2(z0, z1, p0, tr.p1[t]);
  }
}

}  // namespace

CnnStepRisks cnn_lstm_forward(const CnnLstmModel& m, const features::SequenceMatrix& input) {
  CnnTrace tr;
  cnn_forward_trace(m, input, tr);
  CnnStepRisks out;
  out.risks = tr.p1;
  const int stride = m.spec.pool_stride();
  for (size_t t = 0; t < out.risks.size(); ++t) {
    int64_t last = std::min<int64_t>(static_cast<int64_t>(t + 1) * stride, input.n_rows()) - 1;
    out.last_row.push_back(last);
  }
  return out;
}

std::vector<double> linear_step_weights(size_t n_steps) {
  std::vector<double> w(n_steps, 0.0);
  double total = 0.0;
  for (size_t t = 0; t < n_steps; ++t) total += static_cast<double>(t + 1);
  for (size_t t = 0; t < n_steps; ++t) w[t] = static_cast<double>(t + 1) / total;
  return w;
}

double cnn_loss_grad(const CnnLstmModel& m, const features::SequenceMatrix& input, int label,
                     std::span<double> grad, std::vector<double>* step_risks,
                     std::span<const double> step_weights) {
  CnnTrace tr;
  cnn_forward_trace(m, input, tr);
  if (step_risks) *step_risks = tr.p1;

  const size_t T = tr.p1.size();
  if (!step_weights.empty() && step_weights.size() != T)
    throw std::runtime_error("step weight count does not match the output steps");
  auto weight = [&](size_t t) {
    return step_weights.empty() ? 1.0 / static_cast<double>(T) : step_weights[t];
  };
  double loss = 0.0;
  for (size_t t = 0; t < T; ++t) {
    const double p_true = label ? tr.p1[t] : 1.0 - tr.p1[t];
    loss -= weight(t) * std::log(std::max(p_true, 1e-300));
  }
  if (grad.empty()) return loss;
  if (grad.size() != m.layout.total()) throw std::runtime_error("cnn grad size mismatch");

  const CnnLstmSpec& spec = m.spec;
  const size_t h = static_cast<size_t>(spec.lstm_units);
  double* g = grad.data();

  // output layer
  const double* ow = m.block("out_w").data();
  const size_t out_w_off = m.layout.block("out_w").offset;
  const size_t out_b_off = m.layout.block("out_b").offset;
  Matrix dh(T, h);
  for (size_t t = 0; t < T; ++t) {
    const double p1 = tr.p1[t];
    const double dz0 = ((1.0 - p1) - (label ? 0.0 : 1.0)) * weight(t);
    const double dz1 = (p1 - (label ? 1.0 : 0.0)) * weight(t);
    const double* hid = tr.hidden.row(t);
    g[out_b_off] += dz0;
    g[out_b_off + 1] += dz1;
    double* dht = dh.row(t);
    for (size_t j = 0; j < h; ++j) {
      g[out_w_off + 2 * j] += hid[j] * dz0;
      g[out_w_off + 2 * j + 1] += hid[j] * dz1;
      dht[j] = ow[2 * j] * dz0 + ow[2 * j + 1] * dz1;
    }
  }

  // LSTM backward through time
  const Matrix& lstm_in = spec.blocks.empty() ? tr.embedded : tr.pool_out.back();
  const size_t din = lstm_in.cols;
  const double* wx = m.block("lstm_wx").data();
  const double* wh = m.block("lstm_wh").data();
  const double* h0 = m.block("lstm_h0").data();
  const double* c0 = m.block("lstm_c0").data();
  const size_t wx_off = m.layout.block("lstm_wx").offset;
  const size_t wh_off = m.layout.block("lstm_wh").offset;
  const size_t b_off = m.layout.block("lstm_b").offset;
  const size_t h0_off = m.layout.block("lstm_h0").offset;
  const size_t c0_off = m.layout.block("lstm_c0").offset;

  Matrix dx(T, din);
  std::vector<double> dh_carry(h, 0.0);
  std::vector<double> dc_carry(h, 0.0);
  std::vector<double> dz(4 * h);
  for (size_t ti = T; ti-- > 0;) {
    const double* gates = tr.gates.row(ti);
    const double* tc = tr.tanh_c.row(ti);
    const double* c_prev = ti == 0 ? c0 : tr.cells.row(ti - 1);
    const double* h_prev = ti == 0 ? h0 : tr.hidden.row(ti - 1);
    for (size_t j = 0; j < h; ++j) {
      const double gi = gates[j];
      const double gf = gates[h + j];
      const double gg = gates[2 * h + j];
      const double go = gates[3 * h + j];
      const double dht = dh.at(ti, j) + dh_carry[j];
      const double dco = dht * go * (1.0 - tc[j] * tc[j]) + dc_carry[j];
      const double dgo = dht * tc[j];
      const double dgi = dco * gg;
      const double dgg = dco * gi;
      const double dgf = dco * c_prev[j];
      dc_carry[j] = dco * gf;
      dz[j] = dgi * gi * (1.0 - gi);
      dz[h + j] = dgf * gf * (1.0 - gf);
      dz[2 * h + j] = dgg * (1.0 - gg * gg);
      dz[3 * h + j] = dgo * go * (1.0 - go);
    }
    for (size_t j = 0; j < 4 * h; ++j) g[b_off + j] += dz[j];
    const double* xt = lstm_in.row(ti);
    double* dxt = dx.row(ti);
    for (size_t i = 0; i < din; ++i) {
      const double xv = xt[i];
      const double* wrow = wx + i * 4 * h;
      double* grow = g + wx_off + i * 4 * h;
      double acc = 0.0;
      for (size_t j = 0; j < 4 * h; ++j) {
        grow[j] += xv * dz[j];
        acc += wrow[j] * dz[j];
      }
      dxt[i] = acc;
    }
    for (size_t i = 0; i < h; ++i) {
      const double hv = h_prev[i];
      const double* wrow = wh + i * 4 * h;
      double* grow = g + wh_off + i * 4 * h;
      double acc = 0.0;
      for (size_t j = 0; j < 4 * h; ++j) {
        grow[j] += hv * dz[j];
        acc += wrow[j] * dz[j];
      }
      dh_carry[i] = acc;
    }
  }
  for (size_t j = 0; j < h; ++j) {
    g[h0_off + j] += dh_carry[j];
    g[c0_off + j] += dc_carry[j];
  }

  // conv blocks, newest first
  Matrix dcur = std::move(dx);
  for (size_t b = spec.blocks.size(); b-- > 0;) {
    const auto& blk = spec.blocks[b];
    const std::string tag = "conv" + std::to_string(b);
    const Matrix& conv2_post = tr.conv_post[2 * b + 1];
    const Matrix& conv1_post = tr.conv_post[2 * b];
    const Matrix& prev_stage = b == 0 ? tr.embedded : tr.pool_out[b - 1];

    // maxpool backward: route to the argmax within each window
    Matrix dpool(conv2_post.rows, conv2_post.cols);
    for (size_t p = 0; p < dcur.rows; ++p) {
      const size_t a = 2 * p;
      const size_t bb = 2 * p + 1;
      for (size_t c = 0; c < dcur.cols; ++c) {
        const double dv = dcur.at(p, c);
        if (dv == 0.0) continue;
        if (bb < conv2_post.rows && conv2_post.at(bb, c) > conv2_post.at(a, c))
          dpool.at(bb, c) += dv;
        else
          dpool.at(a, c) += dv;
      }
    }

    // second conv of the block
    Matrix d1(conv1_post.rows, conv1_post.cols);
    {
      const size_t w_off = m.layout.block(tag + "b_w").offset;
      const size_t bias_off = m.layout.block(tag + "b_b").offset;
      const double* w = m.block(tag + "b_w").data();
      const size_t dout = static_cast<size_t>(blk.ch2);
      const size_t dinc = static_cast<size_t>(blk.ch1);
      for (size_t t = 0; t < dpool.rows; ++t) {
        double* dz_row = dpool.row(t);
        const double* pre = tr.conv_pre[2 * b + 1].row(t);
        for (size_t j = 0; j < dout; ++j) {
          if (pre[j] <= 0.0) dz_row[j] = 0.0;  // ReLU gate
          g[bias_off + j] += dz_row[j];
        }
        for (int k = 0; k < 3; ++k) {
          const int64_t src = static_cast<int64_t>(t) - 2 + k;
          if (src < 0) continue;
          const double* x = conv1_post.row(static_cast<size_t>(src));
          double* dxrow = d1.row(static_cast<size_t>(src));
          const double* wk = w + static_cast<size_t>(k) * dinc * dout;
          double* gk = g + w_off + static_cast<size_t>(k) * dinc * dout;
          for (size_t i = 0; i < dinc; ++i) {
            const double xv = x[i];
            const double* wrow = wk + i * dout;
            double* grow = gk + i * dout;
            double acc = 0.0;
            for (size_t j = 0; j < dout; ++j) {
              grow[j] += xv * dz_row[j];
              acc += wrow[j] * dz_row[j];
            }
            dxrow[i] += acc;
          }
        }
      }
    }

    // first conv of the block
    Matrix d0(prev_stage.rows, prev_stage.cols);
    {
      const size_t w_off = m.layout.block(tag + "a_w").offset;
      const size_t bias_off = m.layout.block(tag + "a_b").offset;
      const double* w = m.block(tag + "a_w").data();
      const size_t dout = static_cast<size_t>(blk.ch1);
      const size_t dinc = prev_stage.cols;
      for (size_t t = 0; t < d1.rows; ++t) {
        double* dz_row = d1.row(t);
        const double* pre = tr.conv_pre[2 * b].row(t);
        for (size_t j = 0; j < dout; ++j) {
          if (pre[j] <= 0.0) dz_row[j] = 0.0;
          g[bias_off + j] += dz_row[j];
        }
        for (int k = 0; k < 3; ++k) {
          const int64_t src = static_cast<int64_t>(t) - 2 + k;
          if (src < 0) continue;
          const double* x = prev_stage.row(static_cast<size_t>(src));
          double* dxrow = d0.row(static_cast<size_t>(src));
          const double* wk = w + static_cast<size_t>(k) * dinc * dout;
          double* gk = g + w_off + static_cast<size_t>(k) * dinc * dout;
          for (size_t i = 0; i < dinc; ++i) {
            const double xv = x[i];
            const double* wrow = wk + i * dout;
            double* grow = gk + i * dout;
            double acc = 0.0;
            for (size_t j = 0; j < dout; ++j) {
              grow[j] += xv * dz_row[j];
              acc += wrow[j] * dz_row[j];
            }
            dxrow[i] += acc;
          }
        }
      }
    }
    dcur = std::move(d0);
  }

  // embedding backward
  {
    const size_t d = static_cast<size_t>(spec.embed_dim);
    const size_t ev_off = m.layout.block("embed_w").offset;
    const size_t ctx_off = m.layout.block("embed_ctx").offset;
    const size_t b_off2 = m.layout.block("embed_b").offset;
    std::vector<double> dctx_embed(d, 0.0);
    for (size_t r = 0; r < dcur.rows; ++r) {
      const double* drow = dcur.row(r);
      for (size_t j = 0; j < d; ++j) dctx_embed[j] += drow[j];
      for (const auto& [i, v] : input.rows[r]) {
        double* grow = g + ev_off + static_cast<size_t>(i) * d;
        for (size_t j = 0; j < d; ++j) grow[j] += v * drow[j];
      }
    }
    for (size_t j = 0; j < d; ++j) g[b_off2 + j] += dctx_embed[j];
    for (int c = 0; c < spec.context_width; ++c) {
      const double v = input.context[static_cast<size_t>(c)];
      if (v == 0.0) continue;
      double* grow = g + ctx_off + static_cast<size_t>(c) * d;
      for (size_t j = 0; j < d; ++j) grow[j] += v * dctx_embed[j];
    }
  }
  return loss;
}

double grad_check(std::vector<double>& theta,
                  const std::function<double(std::span<double>)>& loss_grad, double eps) {
  std::vector<double> analytic(theta.size(), 0.0);
  loss_grad(analytic);
  double max_rel = 0.0;
  for (size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double up = loss_grad({});
    theta[i] = saved - eps;
    const double down = loss_grad({});
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-2);
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace sepsis::nn
