#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sepsis/events.hpp"
#include "sepsis/util.hpp"

namespace sepsis::cohort {

enum class ContactType { Inpatient, Outpatient };

struct Admission {
  std::string id;
  std::string department;
  int64_t admit_min = 0;      // global axis
  int64_t discharge_min = 0;  // global axis, > admit_min
  ContactType contact = ContactType::Inpatient;
  events::EventSequence sequence;  // times relative to admit
  events::ContextMeta context;

  int64_t duration_min() const { return discharge_min - admit_min; }
};

enum class Label { Negative, Positive };

struct SirsFlags {
  bool heart_rate = false;
  bool temperature = false;
  bool respiration = false;  // respiratory rate or PaCO2
  bool white_cells = false;

  int count() const {
    return (heart_rate ? 1 : 0) + (temperature ? 1 : 0) + (respiration ? 1 : 0) +
           (white_cells ? 1 : 0);
  }
};

struct LabelRecord {
  Label label = Label::Negative;
  int64_t label_time = -1;  // minutes since admission start; onset for positives
  SirsFlags onset_criteria;  // positives only

  bool positive() const { return label == Label::Positive; }
};

// (category, measurement slot) sources for the six monitored vitals, in the
// fixed channel order used by the vital feature vector.
struct VitalSpec {
  struct Channel {
    std::string name;
    std::string category;
    int slot = 0;
  };
  std::vector<Channel> channels;

  static VitalSpec defaults();
  int count() const { return static_cast<int>(channels.size()); }
};

// Where the labeler finds its physiology and its suspicion-of-infection
// markers. Suspicion = blood culture order or IV anti-infective (ATC J01/J02).
struct ClinicalSources {
  std::string heart_rate_category = "vs_hr";
  std::string temperature_category = "vs_temp";
  std::string respiratory_rate_category = "vs_rr";
  std::string paco2_category = "lab_paco2";
  std::string wbc_category = "lab_wbc";
  std::string blood_culture_category = "microbio_culture";
  std::string blood_culture_code = "blood";
  std::string iv_medication_category = "med_iv";

  static bool anti_infective_code(const std::string& atc) {
    return atc.rfind("J01", 0) == 0 || atc.rfind("J02", 0) == 0;
  }
};

struct LabelConfig {
  double sirs_window_h = 6.0;
  double suspicion_lookaround_h = 24.0;
  ClinicalSources sources;
};

// Flags satisfied by some measurement within (at - window, at]:
// HR > 90; temp > 38 or < 36; RR > 20 or PaCO2 < 32; WBC > 12 or < 4.
SirsFlags sirs_flags(const events::EventSequence& seq, int64_t at_min, double window_h,
                     const ClinicalSources& sources = {});

// Positive iff two or more SIRS criteria hold at some time with a suspicion
// marker within the lookaround window; label time is the earliest such time.
LabelRecord label_admission(const Admission& adm, const LabelConfig& cfg = {});

// Onset for positives; seeded uniform draw in [3h, stay - 3h] for negatives.
int64_t choose_label_time(const Admission& adm, const LabelRecord& rec, Rng& rng);

// Retains events with time in [max(0, label_time - max_days), label_time].
events::EventSequence clip_window(const events::EventSequence& seq, int64_t label_time,
                                  int max_days = 5);

struct InclusionConfig {
  double min_duration_h = 3.0;
  double min_dept_prevalence = 0.02;
  LabelConfig label;
};

struct FlowStep {
  std::string step;
  int64_t removed = 0;
  int64_t remaining = 0;
};

struct IncludedCohort {
  std::vector<size_t> kept;  // indices into the input admission span
  std::map<std::string, LabelRecord> labels;  // admission id -> label
  std::vector<FlowStep> flow;
};

// Outpatients out, short stays out, then departments whose labeled sepsis
// prevalence is below the threshold.
IncludedCohort apply_inclusion(std::span<const Admission> admissions,
                               const InclusionConfig& cfg = {});

// Keeps admissions with at least one measurement of every vital channel in
// (label_time - window, label_time].
std::vector<size_t> vital_sign_subset(std::span<const Admission> admissions,
                                      const std::map<std::string, LabelRecord>& labels,
                                      const VitalSpec& vitals = VitalSpec::defaults(),
                                      double window_h = 3.0);

struct SplitConfig {
  uint64_t seed = 0;
  double fractions[3] = {0.8, 0.1, 0.1};  // train / validation / test
  int oversample = 10;
  int neg_ratio = 5;
};

struct DatasetSplit {
  // Unique admission ids per partition (disjoint, exhaustive).
  std::vector<std::string> train_pos, train_neg;
  std::vector<std::string> val_ids, test_ids;
  // Training instances after oversampling: positives duplicated, negatives
  // sampled from train_neg to reach the configured ratio.
  std::vector<std::string> train_instances;
  SplitConfig manifest;
};

DatasetSplit make_splits(const std::vector<std::string>& positive_ids,
                         const std::vector<std::string>& negative_ids, const SplitConfig& cfg);

}  // namespace sepsis::cohort
