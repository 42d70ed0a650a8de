#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sepsis::eval {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
  double summary = 0.0;  // AUROC for roc(), average precision for pr()
};

// AUROC equals the Mann-Whitney statistic with ties counted one half; the
// pair counting is integer-exact. Throws when only one class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);
Curve roc(std::span<const double> scores, std::span<const int> labels);

// Average precision by stepwise integration over distinct thresholds.
double average_precision(std::span<const double> scores, std::span<const int> labels);
Curve pr(std::span<const double> scores, std::span<const int> labels);

// (TP - FP * w) / total with w = p_tau / (1 - p_tau). p_tau in (0, 1).
double net_benefit(double tp, double fp, double total, double p_tau);

struct DecisionCurves {
  Curve model;      // net benefit of the p > tau classifier
  Curve treat_all;  // prevalence - (1 - prevalence) * w
  Curve treat_none; // identically zero
};

DecisionCurves decision_curve(std::span<const double> scores, std::span<const int> labels,
                              std::span<const double> tau_grid);

// Equal-width bins on predicted risk; (mean predicted, observed frequency)
// per non-empty bin, threshold field carries the bin count.
Curve calibration_curve(std::span<const double> scores, std::span<const int> labels,
                        int n_bins = 10);

// Running maximum: a positive classification is never withdrawn.
std::vector<double> seraip_sequence(std::span<const double> step_risks);

struct ScoredCase {
  std::string id;
  std::string department;
  int label = 0;
  int64_t label_time = 0;  // minutes since admission start
  // (prediction time, model risk) on the sliding grid, time ascending
  std::vector<std::pair<int64_t, double>> risks;
  std::vector<int64_t> iv_antibiotic_times;
  std::vector<int64_t> blood_culture_times;
};

struct SeraipRow {
  std::string department;
  int64_t horizon_min = 0;  // classification at label_time - horizon
  int64_t tp = 0, tn = 0, fn = 0, fp = 0;
  int64_t tp_anti = 0, tp_blood = 0, tp_int = 0, tp_no_int = 0;
  int64_t skipped = 0;  // horizon fell before the case's first prediction

  double sensitivity() const;
  double specificity() const;
  double fp_per_tp() const;  // NaN when tp == 0
};

struct SeraipConfig {
  double tau = 0.1;  // global threshold; departments may override
  std::map<std::string, double> tau_by_department;
  std::vector<int64_t> horizons_min = {3 * 60, 10 * 60, 24 * 60};
  double lookback_h = 72.0;

  double tau_for(const std::string& department) const {
    auto it = tau_by_department.find(department);
    return it == tau_by_department.end() ? tau : it->second;
  }
};

// One row per department and horizon, departments sorted by name. The
// intervention columns look back from the prediction time over true
// positives only.
std::vector<SeraipRow> seraip_report(std::span<const ScoredCase> cases,
                                     const SeraipConfig& cfg = {});

std::string horizon_label(int64_t horizon_min);

// Presentation rounding used in the report tables (2 decimal places).
double round2(double v);

}  // namespace sepsis::eval
