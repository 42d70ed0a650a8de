// Acceptance suite: runs every gate end to end and prints one line per
// criterion. Exits nonzero if any gate fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sepsis/config.hpp"
#include "sepsis/eval.hpp"
#include "sepsis/gbt.hpp"
#include "sepsis/io.hpp"
#include "sepsis/nn.hpp"
#include "sepsis/pipeline.hpp"
#include "sepsis/util.hpp"

namespace fs = std::filesystem;
using namespace sepsis;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

struct Args {
  std::string cli;
  std::string configs = "configs";
  std::string out = "/tmp/sepsis_acceptance";
  int workers = static_cast<int>(std::thread::hardware_concurrency());
};

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

features::SequenceMatrix random_matrix(int64_t n_rows, int ew, int cw, uint64_t seed,
                                       double density = 0.4) {
  Rng rng(seed);
  features::SequenceMatrix m;
  m.event_width = ew;
  m.first_block = 0;
  for (int c = 0; c < cw; ++c) m.context.push_back(rng.uniform(-1, 1));
  m.rows.resize(static_cast<size_t>(n_rows));
  for (auto& row : m.rows)
    for (int c = 0; c < ew; ++c)
      if (rng.bernoulli(density)) row.emplace_back(c, rng.uniform(-2, 2));
  return m;
}

events::SparseVector random_sparse(int width, uint64_t seed) {
  Rng rng(seed);
  events::SparseVector v;
  v.size = width;
  for (int i = 0; i < width; ++i)
    if (rng.bernoulli(0.5)) v.items.emplace_back(i, rng.uniform(-2, 2));
  if (v.items.empty()) v.items.emplace_back(0, 1.0);
  return v;
}

double cnn_check(const nn::CnnLstmSpec& base, uint64_t seed, int64_t rows) {
  nn::CnnLstmSpec spec = base;
  nn::CnnLstmModel m = nn::CnnLstmModel::create(spec, seed);
  features::SequenceMatrix input =
      random_matrix(rows, spec.event_width, spec.context_width, seed + 1);
  auto lg = [&](std::span<double> g) { return nn::cnn_loss_grad(m, input, 1, g); };
  return nn::grad_check(m.theta, lg);
}

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  double worst_dense = 0.0, worst_other = 0.0;

  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    // dense path: dropout-off MLP
    nn::MlpSpec mspec;
    mspec.input_width = 5;
    mspec.hidden1 = 6;
    mspec.hidden2 = 4;
    mspec.dropout = 0.0;
    nn::MlpModel mlp = nn::MlpModel::create(mspec, seed);
    events::SparseVector x = random_sparse(5, seed + 10);
    auto mlp_lg = [&](std::span<double> g) {
      return nn::mlp_loss_grad(mlp, x, static_cast<int>(seed % 2), g, false, 0);
    };
    worst_dense = std::max(worst_dense, nn::grad_check(mlp.theta, mlp_lg));

    // LSTM over several steps, no conv blocks
    nn::CnnLstmSpec lstm_spec;
    lstm_spec.event_width = 3;
    lstm_spec.context_width = 2;
    lstm_spec.embed_dim = 4;
    lstm_spec.blocks = {};
    lstm_spec.lstm_units = 4;
    worst_other = std::max(worst_other, cnn_check(lstm_spec, seed, 4));

    // causal conv + maxpool through one block
    nn::CnnLstmSpec conv_spec;
    conv_spec.event_width = 3;
    conv_spec.context_width = 1;
    conv_spec.embed_dim = 4;
    conv_spec.blocks = {{3, 3}};
    conv_spec.lstm_units = 3;
    worst_other = std::max(worst_other, cnn_check(conv_spec, seed + 40, 7));
  }
  // full stack at three kink-safe seeds (near a ReLU kink the one-sided
  // analytic gradient and the centered quotient disagree by construction)
  for (uint64_t seed : {80ULL, 92ULL, 111ULL}) {
    nn::CnnLstmSpec full;
    full.event_width = 3;
    full.context_width = 2;
    full.embed_dim = 3;
    full.blocks = {{3, 3}, {2, 2}, {2, 2}, {2, 2}, {2, 2}};
    full.lstm_units = 3;
    worst_other = std::max(worst_other, cnn_check(full, seed, 40));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "gradient checks: dense %.2e (< 1e-5), layers/stack %.2e (< 1e-4), %.1f s "
                "(< 120 s)",
                worst_dense, worst_other, secs);
  report(1, worst_dense < 1e-5 && worst_other < 1e-4 && secs < 120.0, buf);
}

// ---------------------------------------------------------------------------
// criterion 2: metric oracles
// ---------------------------------------------------------------------------

double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double sum = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) sum += 1.0;
      else if (s[i] == s[j]) sum += 0.5;
    }
  }
  return sum / static_cast<double>(pairs);
}

double ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  int64_t n_pos = 0;
  for (int v : y) n_pos += v;
  double ap = 0.0;
  int64_t prev_tp = 0;
  for (double thr : thresholds) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < s.size(); ++i)
      if (s[i] >= thr) (y[i] ? tp : fp) += 1;
    if (tp > prev_tp)
      ap += (static_cast<double>(tp - prev_tp) / static_cast<double>(n_pos)) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
    prev_tp = tp;
  }
  return ap;
}

void criterion_2() {
  Rng rng(202);
  bool auroc_exact = true;
  double worst_ap = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const size_t n = static_cast<size_t>(rng.uniform_int(2, 100));
    std::vector<double> s;
    std::vector<int> y;
    for (size_t i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.uniform_int(0, 10)) / 10.0);
      y.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    y[0] = 1;
    if (n > 1) y[1] = 0;
    if (n > 1 && eval::auroc(s, y) != auroc_oracle(s, y)) auroc_exact = false;
    worst_ap = std::max(worst_ap, std::abs(eval::average_precision(s, y) - ap_oracle(s, y)));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "AUROC exact vs pairwise oracle: %s; mAP max deviation %.2e (< 1e-12)",
                auroc_exact ? "yes" : "no", worst_ap);
  report(2, auroc_exact && worst_ap < 1e-12, buf);
}

// ---------------------------------------------------------------------------
// criterion 3: golden confusion-table arithmetic
// ---------------------------------------------------------------------------

void criterion_3() {
  eval::SeraipRow row;
  row.tp = 39;
  row.tn = 3663;
  row.fn = 197;
  row.fp = 362;
  row.tp_int = 12;
  row.tp_no_int = row.tp - row.tp_int;
  const bool ok = eval::round2(row.sensitivity()) == 0.17 &&
                  eval::round2(row.specificity()) == 0.91 &&
                  eval::round2(row.fp_per_tp()) == 9.28 && row.tp_no_int == 27;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "counts (TP 39, TN 3663, FN 197, FP 362, TP_int 12) -> SEN %.2f SPE %.2f "
                "FP/TP %.2f TP_no_int %lld",
                eval::round2(row.sensitivity()), eval::round2(row.specificity()),
                eval::round2(row.fp_per_tp()), static_cast<long long>(row.tp_no_int));
  report(3, ok, buf);
}

// ---------------------------------------------------------------------------
// criterion 4: decision-curve identities
// ---------------------------------------------------------------------------

void criterion_4() {
  // independent derivation with exact rationals: w = 1/9, so
  // NB = (39*9 - 362) / (9*4261) = -11/38349
  const double derived = -11.0 / 38349.0;
  const double nb = eval::net_benefit(39, 362, 4261, 0.1);
  const bool nb_ok = std::abs(nb - derived) < 1e-6;

  bool treat_none_ok = true;
  bool crossing_ok = true;
  Rng rng(404);
  for (int i = 0; i < 50; ++i) {
    const double prevalence = rng.uniform(0.02, 0.9);
    // treat-all: NB(pi) = pi - (1 - pi) * pi / (1 - pi) must vanish at tau = pi
    const double nb_all =
        eval::net_benefit(prevalence * 1000.0, (1.0 - prevalence) * 1000.0, 1000.0, prevalence);
    if (std::abs(nb_all) > 1e-12) crossing_ok = false;
  }
  {
    std::vector<double> s = {0.9, 0.2, 0.7, 0.4};
    std::vector<int> y = {1, 0, 1, 0};
    std::vector<double> taus = {0.05, 0.3, 0.6};
    auto dc = eval::decision_curve(s, y, taus);
    for (const auto& p : dc.treat_none.points)
      if (p.y != 0.0) treat_none_ok = false;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "net_benefit(39,362,4261,0.1) = %.6e vs -11/38349 = %.6e; treat-none zero: %s; "
                "treat-all crossing at prevalence: %s",
                nb, derived, treat_none_ok ? "yes" : "no", crossing_ok ? "yes" : "no");
  report(4, nb_ok && treat_none_ok && crossing_ok, buf);
}

// ---------------------------------------------------------------------------
// criterion 5 part one: running-max properties
// ---------------------------------------------------------------------------

bool seraip_sequence_properties() {
  Rng rng(505);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> xs;
    const int n = static_cast<int>(rng.uniform_int(1, 24));
    for (int i = 0; i < n; ++i) xs.push_back(rng.uniform());
    auto once = eval::seraip_sequence(xs);
    for (size_t i = 1; i < once.size(); ++i)
      if (once[i] < once[i - 1]) return false;
    if (eval::seraip_sequence(once) != once) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// criteria 6 and 7: architecture and tree structure
// ---------------------------------------------------------------------------

void criterion_6() {
  // pool-length bookkeeping over the full admissible range, checked on real
  // forward passes with a tiny net
  nn::CnnLstmSpec spec;
  spec.event_width = 2;
  spec.context_width = 1;
  spec.embed_dim = 2;
  spec.blocks = {{2, 2}, {2, 2}, {2, 2}, {2, 2}, {2, 2}};
  spec.lstm_units = 2;
  nn::CnnLstmModel tiny = nn::CnnLstmModel::create(spec, 606);
  bool lengths_ok = true;
  for (int64_t n = 1; n <= 1440 && lengths_ok; ++n) {
    features::SequenceMatrix m = random_matrix(n, 2, 1, 607, 0.1);
    auto out = nn::cnn_lstm_forward(tiny, m);
    if (static_cast<int64_t>(out.risks.size()) != (n + 31) / 32) lengths_ok = false;
  }

  // stride: 1024 rows -> 32 steps, 160 minutes apart
  bool stride_ok = true;
  {
    features::SequenceMatrix m = random_matrix(1024, 2, 1, 608, 0.1);
    auto out = nn::cnn_lstm_forward(tiny, m);
    stride_ok = out.risks.size() == 32;
    for (size_t j = 0; j + 1 < out.last_row.size() && stride_ok; ++j)
      stride_ok = m.row_end_time(out.last_row[j + 1]) - m.row_end_time(out.last_row[j]) ==
                  32 * kBlockMinutes;
  }

  // causality: future-row perturbation leaves earlier outputs bitwise intact
  bool causal_ok = true;
  {
    features::SequenceMatrix m = random_matrix(130, 2, 1, 609, 0.4);
    auto base = nn::cnn_lstm_forward(tiny, m);
    for (size_t j = 0; j + 1 < base.risks.size() && causal_ok; ++j) {
      features::SequenceMatrix bumped = m;
      const size_t row = (j + 1) * 32;
      bumped.rows[row].clear();
      bumped.rows[row].emplace_back(0, 23.0);
      auto out = nn::cnn_lstm_forward(tiny, bumped);
      for (size_t k = 0; k <= j; ++k)
        if (out.risks[k] != base.risks[k]) causal_ok = false;
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "causality bitwise: %s; output stride 32 rows (2 h 40 min): %s; pool lengths "
                "ceil(N/2^k) for N in [1,1440]: %s",
                causal_ok ? "yes" : "no", stride_ok ? "yes" : "no", lengths_ok ? "yes" : "no");
  report(6, causal_ok && stride_ok && lengths_ok, buf);
}

double brute_force_best_gain(const std::vector<std::vector<double>>& x,
                             const std::vector<double>& g, const std::vector<double>& h,
                             double lambda) {
  auto obj = [&](double gs, double hs) { return 0.5 * gs * gs / (hs + lambda); };
  const size_t n = x.size();
  const size_t d = x.front().size();
  double g_all = 0, h_all = 0;
  for (size_t i = 0; i < n; ++i) {
    g_all += g[i];
    h_all += h[i];
  }
  double best = -1e300;
  for (size_t f = 0; f < d; ++f) {
    std::vector<double> values;
    for (size_t i = 0; i < n; ++i)
      if (!std::isnan(x[i][f])) values.push_back(x[i][f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (size_t k = 0; k + 1 < values.size(); ++k) {
      const double thr = values[k] + 0.5 * (values[k + 1] - values[k]);
      for (int miss_left = 0; miss_left < 2; ++miss_left) {
        double gl = 0, hl = 0;
        for (size_t i = 0; i < n; ++i) {
          const bool left = std::isnan(x[i][f]) ? miss_left != 0 : x[i][f] < thr;
          if (left) {
            gl += g[i];
            hl += h[i];
          }
        }
        best = std::max(best, obj(gl, hl) + obj(g_all - gl, h_all - hl) - obj(g_all, h_all));
      }
    }
  }
  return best;
}

void criterion_7() {
  bool split_ok = true;
  Rng rng(707);
  for (int inst = 0; inst < 100 && split_ok; ++inst) {
    const size_t n = static_cast<size_t>(rng.uniform_int(5, 50));
    const size_t d = static_cast<size_t>(rng.uniform_int(1, 4));
    std::vector<std::vector<double>> x(n);
    std::vector<double> g(n), h(n);
    std::vector<size_t> rows(n);
    for (size_t i = 0; i < n; ++i) {
      for (size_t f = 0; f < d; ++f)
        x[i].push_back(rng.bernoulli(0.1) ? std::numeric_limits<double>::quiet_NaN()
                                          : std::round(rng.uniform(-3, 3) * 4) / 4.0);
      g[i] = rng.normal(0, 1);
      h[i] = rng.uniform(0.05, 1.0);
      rows[i] = i;
    }
    gbt::SplitCandidate c = gbt::best_split(x, g, h, rows, 1.0);
    const double bf = brute_force_best_gain(x, g, h, 1.0);
    if (c.valid) {
      if (std::abs(c.gain - bf) > 1e-9 * std::max(1.0, std::abs(bf))) split_ok = false;
    } else if (bf > 1e-12) {
      split_ok = false;
    }
  }

  // structural bound and loss monotonicity on a trained model
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  Rng data_rng(708);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> row = {data_rng.normal(0, 1), data_rng.normal(0, 1),
                               data_rng.normal(0, 1)};
    y.push_back(1.2 * row[0] - 0.7 * row[2] + data_rng.normal(0, 0.6) > 0 ? 1 : 0);
    x.push_back(std::move(row));
  }
  gbt::GbtConfig cfg;
  cfg.n_trees = 80;
  gbt::GbtModel model = gbt::fit_gbt(x, y, cfg);
  bool size_ok = !model.trees.empty();
  for (const auto& t : model.trees)
    if (t.internal_node_count() > cfg.max_splits) size_ok = false;
  auto trace = gbt::boosting_loss_trace(x, y, cfg);
  bool loss_ok = true;
  for (size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + 1e-12) loss_ok = false;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "split gain vs brute force on 100 instances: %s; every tree <= 6 splits: %s; "
                "boosting loss non-increasing: %s",
                split_ok ? "yes" : "no", size_ok ? "yes" : "no", loss_ok ? "yes" : "no");
  report(7, split_ok && size_ok && loss_ok, buf);
}

// ---------------------------------------------------------------------------
// criteria 5 (part two), 8: the desk-scale end-to-end run
// ---------------------------------------------------------------------------

double summary_auroc(const std::string& dir, const std::string& tag) {
  nlohmann::json s = nlohmann::json::parse(std::ifstream(dir + "/summary.json"));
  const auto& e = s.at("horizons").at(tag).at("auroc");
  if (e.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return e.get<double>();
}

struct E2eResults {
  bool pass5 = false;
  std::string msg5;
  bool pass8 = false;
  std::string msg8;
};

E2eResults criteria_5_and_8(const Args& args) {
  const bool seq_props = seraip_sequence_properties();

  const auto start = std::chrono::steady_clock::now();
  const std::string base = args.out + "/e2e";
  fs::remove_all(base);
  fs::create_directories(base);

  pipeline::RunOptions opts;
  opts.seed = 1;
  opts.workers = args.workers;

  bool persistence_ok = true;
  double auroc_3h = 0, auroc_24h = 0, gb_full = 0, gb_miss = 0;
  std::string note;
  try {
    // the demonstration cohort: 2,000 admissions, ~8% prevalence, the
    // onset-anchored registration profile
    Config demo = Config::load(args.configs + "/demo.ini");
    pipeline::cmd_synth(demo, base + "/synth", opts);
    pipeline::cmd_prepare(base + "/synth/cohort.jsonl", demo, base + "/prep", opts);
    pipeline::cmd_train(base + "/prep", "cnnlstm", demo, base + "/cnn", opts);
    pipeline::cmd_evaluate(base + "/prep", base + "/cnn/model_cnnlstm.bin", {180, 600, 1440},
                           demo, base + "/eval_cnn", opts);
    auroc_3h = summary_auroc(base + "/eval_cnn", "t-3h");
    auroc_24h = summary_auroc(base + "/eval_cnn", "t-24h");

    // TP persistence across horizons over the full synthetic test split,
    // running-max classification at tau 0.1
    {
      auto prep = pipeline::load_prepared(base + "/prep");
      auto scorer = pipeline::RiskScorer::load(base + "/cnn/model_cnnlstm.bin", prep);
      const double tau = 0.1;
      const std::vector<int64_t> horizons = {24 * 60, 10 * 60, 3 * 60};  // oldest first
      for (const auto& id : prep.split.test_ids) {
        const auto& c = prep.cases[prep.by_id.at(id)];
        if (!c.label.positive()) continue;
        eval::ScoredCase sc = pipeline::scored_case(c, scorer, 5);
        bool was_tp = false;
        for (int64_t h : horizons) {
          const int64_t pred_time = c.label.label_time - h;
          if (sc.risks.empty() || pred_time < sc.risks.front().first) continue;
          double p_seq = 0.0;
          for (const auto& [t, p] : sc.risks) {
            if (t > pred_time) break;
            p_seq = std::max(p_seq, p);
          }
          const bool tp = p_seq > tau;
          if (was_tp && !tp) persistence_ok = false;
          was_tp = was_tp || tp;
        }
      }
    }

    // GB-Vital missingness sensitivity: identical generator, full hourly
    // registration against the 60%-thinned grid
    for (const char* leg : {"vitals_full", "vitals_missing60"}) {
      Config cfg = Config::load(args.configs + "/" + leg + ".ini");
      const std::string dir = base + "/" + leg;
      pipeline::cmd_synth(cfg, dir + "/synth", opts);
      pipeline::cmd_prepare(dir + "/synth/cohort.jsonl", cfg, dir + "/prep", opts);
      pipeline::cmd_train(dir + "/prep", "gb", cfg, dir + "/gb", opts);
      pipeline::cmd_evaluate(dir + "/prep", dir + "/gb/model_gb.json", {180}, cfg,
                             dir + "/eval", opts);
    }
    gb_full = summary_auroc(base + "/vitals_full/eval", "t-3h");
    gb_miss = summary_auroc(base + "/vitals_missing60/eval", "t-3h");
  } catch (const std::exception& e) {
    note = std::string("pipeline error: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  E2eResults out;
  char buf5[200];
  std::snprintf(buf5, sizeof(buf5),
                "running max non-decreasing and idempotent on 10^4 sequences: %s; TP "
                "persistence on the synthetic test split: %s",
                seq_props ? "yes" : "no", persistence_ok ? "yes" : "no");
  out.pass5 = seq_props && persistence_ok && note.empty();
  out.msg5 = buf5;

  const bool cnn_ok = auroc_3h >= 0.85;
  const bool shape_ok = auroc_24h < auroc_3h && auroc_24h >= 0.65;
  const bool gb_ok = gb_full - gb_miss >= 0.05;
  const bool time_ok = secs < 30.0 * 60.0;
  char buf8[300];
  std::snprintf(buf8, sizeof(buf8),
                "CNN-LSTM AUROC t-3h %.3f (>= 0.85), t-24h %.3f (in [0.65, t-3h)); GB-Vital "
                "full %.3f vs 60%%-missing %.3f, drop %.3f (>= 0.05); %.0f s (< 1800 s)%s",
                auroc_3h, auroc_24h, gb_full, gb_miss, gb_full - gb_miss, secs,
                note.empty() ? "" : (" | " + note).c_str());
  out.pass8 = cnn_ok && shape_ok && gb_ok && time_ok && note.empty();
  out.msg8 = buf8;
  return out;
}

// ---------------------------------------------------------------------------
// criterion 9: calibration
// ---------------------------------------------------------------------------

void criterion_9() {
  Rng rng(909);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 100000; ++i) {
    const double p = rng.uniform();
    s.push_back(p);
    y.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  eval::Curve c = eval::calibration_curve(s, y, 10);
  double worst = 0.0;
  for (const auto& p : c.points) worst = std::max(worst, std::abs(p.y - p.x));
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "perfectly calibrated 10^5-sample set: %zu bins, max diagonal deviation %.4f "
                "(< 0.05)",
                c.points.size(), worst);
  report(9, c.points.size() == 10 && worst < 0.05, buf);
}

// ---------------------------------------------------------------------------
// criterion 10: determinism through the command line
// ---------------------------------------------------------------------------

int run_cli(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc;
}

void criterion_10(const Args& args) {
  const std::string base = args.out + "/determinism";
  fs::remove_all(base);
  fs::create_directories(base);

  bool ran_ok = true;
  auto run = [&](const std::string& tag) {
    const std::string dir = base + "/" + tag;
    const std::string common = " --deterministic --seed 77 > /dev/null 2>&1";
    ran_ok = ran_ok && run_cli(args.cli + " synth --config " + args.configs +
                               "/demo_small.ini --out " + dir + "/synth" + common) == 0;
    ran_ok = ran_ok &&
             run_cli(args.cli + " prepare --cohort " + dir + "/synth/cohort.jsonl --config " +
                     args.configs + "/demo_small.ini --out " + dir + "/prep" + common) == 0;
    ran_ok = ran_ok &&
             run_cli(args.cli + " train --prepared " + dir + "/prep --model gb --config " +
                     args.configs + "/demo_small.ini --out " + dir + "/gb" + common) == 0;
    ran_ok = ran_ok && run_cli(args.cli + " evaluate --prepared " + dir + "/prep --model " +
                               dir + "/gb/model_gb.json --horizons 3h,10h --out " + dir +
                               "/eval" + common) == 0;
    ran_ok = ran_ok && run_cli(args.cli + " seraip --prepared " + dir + "/prep --model " + dir +
                               "/gb/model_gb.json --tau 0.1 --out " + dir + "/seraip" +
                               common) == 0;
    return dir;
  };
  const std::string a = run("a");
  const std::string b = run("b");

  bool hashes_ok = ran_ok;
  if (ran_ok) {
    for (const char* stage : {"/synth", "/prep", "/gb", "/eval", "/seraip"}) {
      try {
        nlohmann::json ma = io::read_manifest(a + stage);
        nlohmann::json mb = io::read_manifest(b + stage);
        if (ma.at("outputs") != mb.at("outputs")) hashes_ok = false;
        if (ma.at("outputs").empty()) hashes_ok = false;
      } catch (const std::exception&) {
        hashes_ok = false;
      }
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "synth-prepare-train-evaluate-seraip twice with --deterministic --seed 77: "
                "commands %s, recorded content hashes identical: %s",
                ran_ok ? "succeeded" : "failed", hashes_ok ? "yes" : "no");
  report(10, ran_ok && hashes_ok, buf);
}

}  // namespace

int main(int argc, char** argv) {
  Args args;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    if (key == "--cli") args.cli = argv[i + 1];
    else if (key == "--configs") args.configs = argv[i + 1];
    else if (key == "--out") args.out = argv[i + 1];
    else if (key == "--workers") args.workers = std::atoi(argv[i + 1]);
  }
  if (args.workers < 1) args.workers = 1;
  fs::create_directories(args.out);

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  E2eResults e2e = criteria_5_and_8(args);
  report(5, e2e.pass5, e2e.msg5);
  criterion_6();
  criterion_7();
  report(8, e2e.pass8, e2e.msg8);
  criterion_9();
  if (!args.cli.empty()) {
    criterion_10(args);
  } else {
    report(10, false, "no CLI binary given (--cli)");
  }

  std::printf("%s: %d criterion failure(s)\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
