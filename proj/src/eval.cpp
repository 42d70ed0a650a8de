#include "sepsis/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace sepsis::eval {

namespace {

struct Ranked {
  std::vector<std::pair<double, int>> by_score_desc;  // (score, label)
  int64_t n_pos = 0;
  int64_t n_neg = 0;
};

Ranked rank(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::runtime_error("scores and labels differ in length");
  Ranked r;
  r.by_score_desc.reserve(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    r.by_score_desc.emplace_back(scores[i], labels[i] ? 1 : 0);
    (labels[i] ? r.n_pos : r.n_neg) += 1;
  }
  std::sort(r.by_score_desc.begin(), r.by_score_desc.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  return r;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  Ranked r = rank(scores, labels);
  if (r.n_pos == 0 || r.n_neg == 0) throw std::runtime_error("undefined AUROC: single class");

  // walk descending scores; count (positive above negative) pairs, ties get
  // weight 1/2; twice_sum keeps everything in integers
  int64_t twice_sum = 0;
  int64_t pos_seen = 0;
  size_t i = 0;
  const auto& v = r.by_score_desc;
  while (i < v.size()) {
    size_t j = i;
    int64_t tie_pos = 0, tie_neg = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tie_pos : tie_neg) += 1;
      ++j;
    }
    twice_sum += 2 * pos_seen * tie_neg;  // strictly higher positives
    twice_sum += tie_pos * tie_neg;       // ties count one half
    pos_seen += tie_pos;
    i = j;
  }
  return static_cast<double>(twice_sum) / (2.0 * static_cast<double>(r.n_pos * r.n_neg));
}

Curve roc(std::span<const double> scores, std::span<const int> labels) {
  Ranked r = rank(scores, labels);
  if (r.n_pos == 0 || r.n_neg == 0) throw std::runtime_error("undefined AUROC: single class");
  Curve c;
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  const auto& v = r.by_score_desc;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tp : fp) += 1;
      ++j;
    }
    c.points.push_back({static_cast<double>(fp) / static_cast<double>(r.n_neg),
                        static_cast<double>(tp) / static_cast<double>(r.n_pos), v[i].first});
    i = j;
  }
  c.summary = auroc(scores, labels);
  return c;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  Ranked r = rank(scores, labels);
  if (r.n_pos == 0) throw std::runtime_error("undefined average precision: no positives");
  double ap = 0.0;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  const auto& v = r.by_score_desc;
  while (i < v.size()) {
    size_t j = i;
    int64_t prev_tp = tp;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tp : fp) += 1;
      ++j;
    }
    if (tp > prev_tp) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double recall_delta =
          static_cast<double>(tp - prev_tp) / static_cast<double>(r.n_pos);
      ap += precision * recall_delta;
    }
    i = j;
  }
  return ap;
}

Curve pr(std::span<const double> scores, std::span<const int> labels) {
  Ranked r = rank(scores, labels);
  if (r.n_pos == 0) throw std::runtime_error("undefined average precision: no positives");
  Curve c;
  c.points.push_back({0.0, 1.0, std::numeric_limits<double>::infinity()});
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  const auto& v = r.by_score_desc;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tp : fp) += 1;
      ++j;
    }
    c.points.push_back({static_cast<double>(tp) / static_cast<double>(r.n_pos),
                        static_cast<double>(tp) / static_cast<double>(tp + fp), v[i].first});
    i = j;
  }
  c.summary = average_precision(scores, labels);
  return c;
}

double net_benefit(double tp, double fp, double total, double p_tau) {
  if (!(p_tau > 0.0 && p_tau < 1.0))
    throw std::runtime_error("net benefit threshold must lie strictly inside (0, 1)");
  if (!(total > 0.0)) throw std::runtime_error("net benefit needs a positive total count");
  const double weight = p_tau / (1.0 - p_tau);
  return (tp - fp * weight) / total;
}

DecisionCurves decision_curve(std::span<const double> scores, std::span<const int> labels,
                              std::span<const double> tau_grid) {
  DecisionCurves out;
  const double total = static_cast<double>(scores.size());
  double n_pos = 0.0;
  for (int y : labels) n_pos += y ? 1.0 : 0.0;
  const double n_neg = total - n_pos;

  for (double tau : tau_grid) {
    double tp = 0.0, fp = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] > tau) (labels[i] ? tp : fp) += 1.0;
    }
    out.model.points.push_back({tau, net_benefit(tp, fp, total, tau), tau});
    out.treat_all.points.push_back({tau, net_benefit(n_pos, n_neg, total, tau), tau});
    out.treat_none.points.push_back({tau, 0.0, tau});
  }
  return out;
}

Curve calibration_curve(std::span<const double> scores, std::span<const int> labels,
                        int n_bins) {
  if (n_bins < 1) throw std::runtime_error("calibration needs at least one bin");
  std::vector<double> sum_pred(static_cast<size_t>(n_bins), 0.0);
  std::vector<double> sum_label(static_cast<size_t>(n_bins), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(n_bins), 0);
  for (size_t i = 0; i < scores.size(); ++i) {
    int b = static_cast<int>(scores[i] * n_bins);
    b = std::max(0, std::min(n_bins - 1, b));  // score 1.0 closes the last bin
    sum_pred[static_cast<size_t>(b)] += scores[i];
    sum_label[static_cast<size_t>(b)] += labels[i] ? 1.0 : 0.0;
    count[static_cast<size_t>(b)] += 1;
  }
  Curve c;
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<size_t>(b)] == 0) continue;  // empty bins omitted
    const double n = static_cast<double>(count[static_cast<size_t>(b)]);
    c.points.push_back({sum_pred[static_cast<size_t>(b)] / n,
                        sum_label[static_cast<size_t>(b)] / n, n});
  }
  return c;
}

std::vector<double> seraip_sequence(std::span<const double> step_risks) {
  std::vector<double> out;
  out.reserve(step_risks.size());
  double running = -std::numeric_limits<double>::infinity();
  for (double p : step_risks) {
    running = std::max(running, p);
    out.push_back(running);
  }
  return out;
}

double SeraipRow::sensitivity() const {
  return tp + fn == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double SeraipRow::specificity() const {
  return tn + fp == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(tn) / static_cast<double>(tn + fp);
}

double SeraipRow::fp_per_tp() const {
  return tp == 0 ? std::numeric_limits<double>::quiet_NaN()
                 : static_cast<double>(fp) / static_cast<double>(tp);
}

std::string horizon_label(int64_t horizon_min) {
  if (horizon_min % 60 == 0) return "t-" + std::to_string(horizon_min / 60) + "h";
  return "t-" + std::to_string(horizon_min) + "min";
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<SeraipRow> seraip_report(std::span<const ScoredCase> cases,
                                     const SeraipConfig& cfg) {
  const int64_t lookback = static_cast<int64_t>(cfg.lookback_h * 60.0);
  std::map<std::string, std::vector<const ScoredCase*>> by_dept;
  for (const auto& c : cases) by_dept[c.department].push_back(&c);

  auto any_between = [](const std::vector<int64_t>& times, int64_t lo, int64_t hi) {
    for (int64_t t : times)
      if (t >= lo && t <= hi) return true;
    return false;
  };

  std::vector<SeraipRow> rows;
  for (const auto& [dept, members] : by_dept) {
    const double tau = cfg.tau_for(dept);
    for (int64_t horizon : cfg.horizons_min) {
      SeraipRow row;
      row.department = dept;
      row.horizon_min = horizon;
      for (const ScoredCase* c : members) {
        const int64_t pred_time = c->label_time - horizon;
        if (c->risks.empty() || pred_time < c->risks.front().first) {
          row.skipped += 1;  // horizon precedes the first available prediction
          continue;
        }
        // running max of the case's risk sequence up to the prediction time
        double p_seq = 0.0;
        for (const auto& [t, p] : c->risks) {
          if (t > pred_time) break;
          p_seq = std::max(p_seq, p);
        }
        const bool predicted = p_seq > tau;
        if (c->label) {
          if (predicted) {
            row.tp += 1;
            const bool anti =
                any_between(c->iv_antibiotic_times, pred_time - lookback, pred_time);
            const bool blood =
                any_between(c->blood_culture_times, pred_time - lookback, pred_time);
            if (anti) row.tp_anti += 1;
            if (blood) row.tp_blood += 1;
            if (anti || blood) row.tp_int += 1;
          } else {
            row.fn += 1;
          }
        } else {
          if (predicted) row.fp += 1;
          else row.tn += 1;
        }
      }
      row.tp_no_int = row.tp - row.tp_int;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace sepsis::eval
