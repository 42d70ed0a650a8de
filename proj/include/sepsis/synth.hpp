#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepsis/cohort.hpp"
#include "sepsis/config.hpp"
#include "sepsis/events.hpp"

namespace sepsis::synth {

// Event categories the generator emits; also the catalog the labeler and the
// vectorizers run against.
events::CategoryCatalog default_catalog();

struct DepartmentConfig {
  std::string name;
  double weight = 1.0;      // admission mix
  double prevalence = 0.05; // sepsis probability for inpatient admissions
};

struct CompletenessBand {
  double start_h = 0.0;  // hours before onset, band covers [t-end, t-start]
  double end_h = 6.0;
  double target = 1.0;   // fraction of positives with >= 2 vitals in the band
};

enum class VitalProfile {
  Banded,   // onset-anchored registration matching the completeness bands
  Full,     // hourly panels for everyone
  Thinned,  // hourly grid kept with probability (1 - missing_fraction)
};

struct CohortConfig {
  int64_t n_admissions = 2000;
  uint64_t seed = 1;
  std::vector<DepartmentConfig> departments;
  double outpatient_fraction = 0.2;

  VitalProfile vital_profile = VitalProfile::Banded;
  double missing_fraction = 0.6;  // Thinned profile only
  std::vector<CompletenessBand> completeness_bands;

  // fraction of positives with an intervention before onset, and its lead
  double intervention_fraction = 0.3;
  double intervention_lead_min_h = 1.0;
  double intervention_lead_max_h = 24.0;

  // stays (minutes). Negatives draw uniformly; positives place their onset
  // first and extend the stay past it.
  int64_t negative_stay_min = 30 * 60;
  int64_t negative_stay_max = 84 * 60;
  double negative_brief_stay_fraction = 0.03;  // stays of 1-5 h, mostly filtered out
  int64_t onset_min = 26 * 60;
  int64_t onset_max = 56 * 60;
  int64_t post_onset_stay_min = 8 * 60;
  int64_t post_onset_stay_max = 28 * 60;

  static CohortConfig defaults();
  static CohortConfig from_config(const Config& cfg, const std::string& section = "synth");
};

std::vector<cohort::Admission> generate_cohort(const CohortConfig& cfg, int workers = 1);

struct ValidationCheck {
  std::string name;
  double target = 0.0;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  int64_t n_admissions = 0;
  int64_t n_inpatient = 0;
  int64_t n_labeled_positive = 0;
  bool all_pass = true;
  bool flagged_empty = false;
};

// Re-labels the cohort and measures prevalence and vital completeness
// against the generator's own targets.
ValidationReport validate_cohort(std::span<const cohort::Admission> admissions,
                                 const CohortConfig& cfg,
                                 const cohort::LabelConfig& label_cfg = {});

}  // namespace sepsis::synth
