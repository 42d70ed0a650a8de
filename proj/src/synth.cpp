#include "sepsis/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "sepsis/util.hpp"

namespace sepsis::synth {

using cohort::Admission;
using cohort::ContactType;
using events::Event;
using events::EventCategory;
using events::Kind;

events::CategoryCatalog default_catalog() {
  events::CategoryCatalog cat;
  auto numeric = [&](const char* id, int arity) {
    EventCategory c;
    c.id = id;
    c.kind = Kind::Numeric;
    c.arity = arity;
    cat.add(c);
  };
  auto categorical = [&](const char* id) {
    EventCategory c;
    c.id = id;
    c.kind = Kind::Categorical;
    cat.add(c);
  };
  numeric("vs_bp", 2);
  numeric("vs_hr", 1);
  numeric("vs_rr", 1);
  numeric("vs_spo2", 1);
  numeric("vs_temp", 1);
  numeric("lab_wbc", 1);
  numeric("lab_crp", 1);
  numeric("lab_paco2", 1);
  numeric("lab_creatinine", 1);
  numeric("lab_lactate", 1);
  categorical("med_iv");
  categorical("med_oral");
  categorical("microbio_culture");
  categorical("proc_ncsp");
  {
    EventCategory c;
    c.id = "diag_icd10";
    c.kind = Kind::Hierarchical;
    c.hier_prefix_len = {1, 3, 5};
    cat.add(c);
  }
  return cat;
}

CohortConfig CohortConfig::defaults() {
  CohortConfig cfg;
  cfg.departments = {
      {"emergency_1", 0.40, 0.090}, {"medical_1", 0.20, 0.065},
      {"surgical_1", 0.15, 0.055},  {"oncology_2", 0.10, 0.085},
      {"hematology_2", 0.07, 0.090}, {"icu_1", 0.05, 0.140},
      {"rehab_1", 0.03, 0.004},
  };
  cfg.completeness_bands = {
      {0.0, 6.0, 1.00}, {3.0, 9.0, 0.65}, {12.0, 18.0, 0.43}, {24.0, 30.0, 0.32}};
  cfg.onset_min = 32 * 60;
  cfg.onset_max = 56 * 60;
  return cfg;
}

CohortConfig CohortConfig::from_config(const Config& c, const std::string& s) {
  CohortConfig cfg = defaults();
  cfg.n_admissions = c.get_int(s, "n_admissions", cfg.n_admissions);
  cfg.seed = static_cast<uint64_t>(c.get_int(s, "seed", static_cast<int64_t>(cfg.seed)));
  cfg.outpatient_fraction = c.get_double(s, "outpatient_fraction", cfg.outpatient_fraction);
  cfg.intervention_fraction = c.get_double(s, "intervention_fraction", cfg.intervention_fraction);
  cfg.intervention_lead_min_h =
      c.get_double(s, "intervention_lead_min_h", cfg.intervention_lead_min_h);
  cfg.intervention_lead_max_h =
      c.get_double(s, "intervention_lead_max_h", cfg.intervention_lead_max_h);
  cfg.missing_fraction = c.get_double(s, "missing_fraction", cfg.missing_fraction);
  const std::string profile = c.get_str(s, "vital_profile", "banded");
  if (profile == "banded") cfg.vital_profile = VitalProfile::Banded;
  else if (profile == "full") cfg.vital_profile = VitalProfile::Full;
  else if (profile == "thinned") cfg.vital_profile = VitalProfile::Thinned;
  else throw std::runtime_error("unknown vital_profile: " + profile);
  // departments as name:weight:prevalence triples
  if (c.has(s, "departments")) {
    cfg.departments.clear();
    for (const auto& item : c.get_list(s, "departments")) {
      size_t p1 = item.find(':');
      size_t p2 = item.find(':', p1 == std::string::npos ? p1 : p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos)
        throw std::runtime_error("department entry must be name:weight:prevalence: " + item);
      DepartmentConfig d;
      d.name = item.substr(0, p1);
      d.weight = std::stod(item.substr(p1 + 1, p2 - p1 - 1));
      d.prevalence = std::stod(item.substr(p2 + 1));
      cfg.departments.push_back(d);
    }
  }
  if (c.has(s, "uniform_prevalence")) {
    const double p = c.get_double(s, "uniform_prevalence", 0.05);
    for (auto& d : cfg.departments) d.prevalence = p;
  }
  cfg.negative_stay_min = c.get_int(s, "negative_stay_min", cfg.negative_stay_min);
  cfg.negative_stay_max = c.get_int(s, "negative_stay_max", cfg.negative_stay_max);
  cfg.onset_min = c.get_int(s, "onset_min", cfg.onset_min);
  cfg.onset_max = c.get_int(s, "onset_max", cfg.onset_max);
  return cfg;
}

namespace {

constexpr int64_t kSlot = 3 * 60;  // vital panel scheduling slot, minutes

// Per-slot panel probability q solving 1-(1-q)^2 = band target for the
// onset-anchored bands, with interpolated fill between bands.
double slot_panel_prob(int64_t slot_index) {
  switch (slot_index) {
    case 0: return 1.0;
    case 1:
    case 2: return 0.4084;  // [t-9, t-3] -> 0.65
    case 3: return 0.32;
    case 4:
    case 5: return 0.2450;  // [t-18, t-12] -> 0.43
    case 6:
    case 7: return 0.21;
    case 8:
    case 9: return 0.1754;  // [t-30, t-24] -> 0.32
    default: return 0.16;
  }
}

struct Trajectories {
  bool positive = false;
  int64_t onset = -1;
  // partner criterion beside heart rate: 0 temp, 1 resp rate, 2 wbc
  int partner = 0;
  bool febrile = true;   // partner temp: high vs low
  bool wbc_high = true;  // partner wbc: high vs low

  double sbp0 = 0, dbp_ratio = 0, hr0 = 0, rr0 = 0, spo2_0 = 0, temp0 = 0, wbc0 = 0,
         crp0 = 0, creat0 = 0, lact0 = 0;
  double hr_onset = 0, temp_onset = 0, rr_onset = 0, wbc_onset = 0, sbp_onset = 0,
         spo2_onset = 0;
  double crp_peak = 0;
  double drift_hr = 1, drift_temp = 1, drift_rr = 1, drift_spo2 = 1, drift_sbp = 1;
  bool inflamed_negative = false;

  double ramp(int64_t t, double hours) const {
    if (!positive) return 0.0;
    const double start = static_cast<double>(onset) - hours * 60.0;
    if (static_cast<double>(t) <= start) return 0.0;
    const double f = (static_cast<double>(t) - start) / (hours * 60.0);
    return std::min(1.0, f);
  }

  bool after_onset(int64_t t) const { return positive && t >= onset; }
};

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

Trajectories make_trajectories(Rng& rng, bool positive, int64_t onset) {
  Trajectories tr;
  tr.positive = positive;
  tr.onset = onset;
  tr.sbp0 = rng.normal(126, 12);
  tr.dbp_ratio = rng.uniform(0.58, 0.66);
  tr.hr0 = rng.normal(76, 7);
  tr.rr0 = rng.normal(15, 1.5);
  tr.spo2_0 = rng.normal(96.5, 1.4);
  tr.temp0 = rng.normal(37.0, 0.28);
  tr.wbc0 = rng.normal(7.5, 1.0);
  tr.crp0 = std::abs(rng.normal(4, 3));
  tr.creat0 = rng.normal(80, 12);
  tr.lact0 = std::abs(rng.normal(1.2, 0.3));
  if (!positive) {
    tr.inflamed_negative = rng.bernoulli(0.10);
    if (tr.inflamed_negative) {
      tr.crp0 = rng.uniform(20, 60);
      tr.hr0 += 5.0;
    }
    return tr;
  }
  const double u = rng.uniform();
  tr.partner = u < 0.5 ? 0 : (u < 0.8 ? 1 : 2);
  tr.febrile = rng.uniform() < 0.9;
  tr.wbc_high = rng.uniform() < 0.8;
  tr.hr_onset = rng.uniform(95, 120);
  tr.temp_onset = tr.febrile ? rng.uniform(38.4, 39.8) : rng.uniform(34.9, 35.6);
  tr.rr_onset = rng.uniform(22, 30);
  tr.wbc_onset = tr.wbc_high ? rng.uniform(13, 20) : rng.uniform(2.6, 3.7);
  tr.sbp_onset = rng.uniform(85, 105);
  tr.spo2_onset = rng.uniform(86, 93);
  tr.crp_peak = rng.uniform(80, 200);
  tr.drift_hr = rng.uniform(0.35, 1.0);
  tr.drift_temp = rng.uniform(0.35, 1.0);
  tr.drift_rr = rng.uniform(0.35, 1.0);
  tr.drift_spo2 = rng.uniform(0.35, 1.0);
  tr.drift_sbp = rng.uniform(0.35, 1.0);
  return tr;
}

double heart_rate_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t)) return clampd(tr.hr_onset + rng.normal(0, 4), 91.5, 150);
  const double drift = tr.drift_hr * tr.ramp(t, 7.0) * (89.0 - tr.hr0);
  return clampd(tr.hr0 + drift + rng.normal(0, 3.0), 48, 89.6);
}

double temperature_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t) && tr.partner == 0) {
    if (tr.febrile) return clampd(tr.temp_onset + rng.normal(0, 0.25), 38.3, 41.0);
    return clampd(tr.temp_onset + rng.normal(0, 0.2), 34.2, 35.7);
  }
  const double drift = tr.drift_temp * tr.ramp(t, 7.0) * 0.8;
  return clampd(tr.temp0 + drift + rng.normal(0, 0.22), 36.2, 37.9);
}

double resp_rate_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t) && tr.partner == 1)
    return clampd(tr.rr_onset + rng.normal(0, 1.5), 21.5, 40);
  const double drift = tr.drift_rr * tr.ramp(t, 7.0) * (19.0 - tr.rr0);
  return clampd(tr.rr0 + drift + rng.normal(0, 1.1), 10, 19.6);
}

double wbc_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t) && tr.partner == 2) {
    if (tr.wbc_high) return clampd(tr.wbc_onset + rng.normal(0, 1.2), 12.6, 30);
    return clampd(tr.wbc_onset + rng.normal(0, 0.4), 1.5, 3.8);
  }
  const double drift = tr.ramp(t, 14.0) * (11.0 - tr.wbc0);
  return clampd(tr.wbc0 + drift + rng.normal(0, 0.5), 4.6, 11.4);
}

double spo2_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t)) return clampd(tr.spo2_onset + rng.normal(0, 1.2), 80, 96);
  const double drift = tr.drift_spo2 * tr.ramp(t, 7.0) * 6.0;
  return clampd(tr.spo2_0 - drift + rng.normal(0, 1.2), 87, 100);
}

double sbp_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t)) return clampd(tr.sbp_onset + rng.normal(0, 6), 70, 125);
  const double drift = tr.drift_sbp * tr.ramp(t, 6.0) * 20.0;
  return clampd(tr.sbp0 - drift + rng.normal(0, 8), 84, 185);
}

double crp_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t)) return std::max(0.5, tr.crp_peak * rng.uniform(0.9, 1.2));
  const double f = tr.ramp(t, 30.0);
  return std::max(0.3, tr.crp0 + f * f * tr.crp_peak + rng.normal(0, 3 + 5 * f));
}

double lactate_at(const Trajectories& tr, int64_t t, Rng& rng) {
  if (tr.after_onset(t)) return clampd(rng.uniform(2.5, 4.5), 0.4, 8);
  const double drift = tr.ramp(t, 12.0) * 1.3;
  return clampd(tr.lact0 + drift + rng.normal(0, 0.2), 0.4, 8);
}

void push_numeric(events::EventSequence& seq, int64_t t, const char* cat,
                  std::initializer_list<double> values) {
  Event ev;
  ev.time = t;
  ev.category = cat;
  ev.values = values;
  seq.events.push_back(std::move(ev));
}

void push_code(events::EventSequence& seq, int64_t t, const char* cat, std::string code) {
  Event ev;
  ev.time = t;
  ev.category = cat;
  ev.code = std::move(code);
  seq.events.push_back(std::move(ev));
}

void vital_panel(events::EventSequence& seq, const Trajectories& tr, int64_t t, Rng& rng) {
  const double sbp = sbp_at(tr, t, rng);
  push_numeric(seq, t, "vs_bp", {sbp, sbp * tr.dbp_ratio + rng.normal(0, 4)});
  push_numeric(seq, t, "vs_hr", {heart_rate_at(tr, t, rng)});
  push_numeric(seq, t, "vs_rr", {resp_rate_at(tr, t, rng)});
  push_numeric(seq, t, "vs_spo2", {spo2_at(tr, t, rng)});
  push_numeric(seq, t, "vs_temp", {temperature_at(tr, t, rng)});
}

void lab_draw(events::EventSequence& seq, const Trajectories& tr, int64_t t, Rng& rng) {
  push_numeric(seq, t, "lab_wbc", {wbc_at(tr, t, rng)});
  push_numeric(seq, t, "lab_crp", {crp_at(tr, t, rng)});
  if (rng.bernoulli(0.15))
    push_numeric(seq, t, "lab_paco2", {clampd(rng.normal(40, 2.5), 34, 50)});
  if (rng.bernoulli(0.4))
    push_numeric(
        seq, t, "lab_creatinine",
        {clampd(tr.creat0 * (tr.after_onset(t) ? 1.3 : 1.0) + rng.normal(0, 8), 35, 400)});
  if (rng.bernoulli(0.3)) push_numeric(seq, t, "lab_lactate", {lactate_at(tr, t, rng)});
}

const char* kAntibiotics[] = {"J01CA04", "J01DD04", "J01GB03", "J02AC01"};
const char* kOralMeds[] = {"N02BE01", "C10AA05", "A02BC01", "C07AB02"};
const char* kIvFluids[] = {"B05BA03", "N02AA01"};
const char* kInfectionDx[] = {"J159", "N300"};
const char* kOtherDx[] = {"I109", "E119", "I259", "K219", "M545", "J449"};
const char* kProcedures[] = {"UXRC00", "TKA20", "UJD02"};

template <size_t N>
const char* pick(const char* (&arr)[N], Rng& rng) {
  return arr[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(N) - 1))];
}

Admission generate_admission(size_t index, const CohortConfig& cfg,
                             const std::vector<double>& dept_weights) {
  Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(index)));
  Admission adm;
  {
    char id[32];
    std::snprintf(id, sizeof(id), "adm-%06zu", index);
    adm.id = id;
  }
  const DepartmentConfig& dept = cfg.departments[rng.weighted_choice(dept_weights)];
  adm.department = dept.name;
  adm.admit_min = static_cast<int64_t>(index) * 53;

  const bool outpatient = rng.bernoulli(cfg.outpatient_fraction);
  adm.contact = outpatient ? ContactType::Outpatient : ContactType::Inpatient;

  bool positive = false;
  int64_t onset = -1;
  int64_t stay = 0;
  if (outpatient) {
    stay = rng.uniform_int(30, 150);
  } else {
    positive = rng.bernoulli(dept.prevalence);
    if (positive) {
      onset = rng.uniform_int(cfg.onset_min, cfg.onset_max);
      stay = onset + rng.uniform_int(cfg.post_onset_stay_min, cfg.post_onset_stay_max);
    } else if (rng.bernoulli(cfg.negative_brief_stay_fraction)) {
      stay = rng.uniform_int(60, 300);
    } else {
      stay = rng.uniform_int(cfg.negative_stay_min, cfg.negative_stay_max);
    }
  }
  adm.discharge_min = adm.admit_min + stay;

  // context
  adm.context.age_years = clampd(rng.normal(positive ? 70 : 62, 15), 18, 99);
  adm.context.sex = rng.bernoulli(0.5) ? "female" : "male";
  {
    const double u = rng.uniform();
    adm.context.marital =
        u < 0.42 ? "married" : (u < 0.72 ? "single" : (u < 0.88 ? "widowed" : "divorced"));
  }
  {
    events::ContextSchema schema;
    const double p = positive ? 0.14 : 0.08;
    for (const auto& code : schema.comorbidity_codes)
      if (rng.bernoulli(p)) adm.context.comorbidities.push_back(code);
  }

  Trajectories tr = make_trajectories(rng, positive, onset);
  events::EventSequence& seq = adm.sequence;

  auto clamp_t = [&](int64_t t) { return std::max<int64_t>(0, std::min(stay, t)); };

  // admission work-up
  vital_panel(seq, tr, clamp_t(rng.uniform_int(5, 30)), rng);
  if (!outpatient) lab_draw(seq, tr, clamp_t(rng.uniform_int(10, 60)), rng);

  // admission diagnoses
  {
    const int n_dx = static_cast<int>(rng.uniform_int(1, 3));
    const bool infection_dx = rng.bernoulli(positive ? 0.35 : 0.12);
    for (int k = 0; k < n_dx; ++k) {
      const char* code = (k == 0 && infection_dx) ? pick(kInfectionDx, rng) : pick(kOtherDx, rng);
      push_code(seq, clamp_t(rng.uniform_int(0, 60)), "diag_icd10", code);
    }
  }

  if (outpatient) {
    seq.sort_by_time();
    return adm;
  }

  // scheduled vital panels
  switch (cfg.vital_profile) {
    case VitalProfile::Banded: {
      if (positive) {
        // slots anchored backward from onset
        for (int64_t k = 0;; ++k) {
          const int64_t slot_hi = onset - k * kSlot;
          const int64_t slot_lo = slot_hi - kSlot;
          if (slot_hi <= 0) break;
          if (k == 0) {
            vital_panel(seq, tr, clamp_t(onset - rng.uniform_int(30, 150)), rng);
          } else if (rng.bernoulli(slot_panel_prob(k))) {
            vital_panel(
                seq, tr,
                clamp_t(std::max<int64_t>(0, slot_lo) + rng.uniform_int(5, kSlot - 5)), rng);
          }
        }
        // close monitoring after onset
        for (int64_t t = onset; t <= stay; t += kSlot)
          vital_panel(seq, tr, clamp_t(t + rng.uniform_int(0, 50)), rng);
      } else {
        // background registration near the positives' far-from-onset rate,
        // so panel density alone carries no label signal
        for (int64_t t = 0; t < stay; t += kSlot)
          if (rng.bernoulli(0.22))
            vital_panel(seq, tr, clamp_t(t + rng.uniform_int(5, kSlot - 5)), rng);
      }
      break;
    }
    case VitalProfile::Full:
    case VitalProfile::Thinned: {
      const double keep =
          cfg.vital_profile == VitalProfile::Full ? 1.0 : 1.0 - cfg.missing_fraction;
      for (int64_t t = 0; t < stay; t += kMinutesPerHour)
        if (rng.bernoulli(keep)) vital_panel(seq, tr, clamp_t(t + rng.uniform_int(0, 10)), rng);
      break;
    }
  }

  // onset panel registers the two qualifying criteria at the onset itself
  if (positive) {
    vital_panel(seq, tr, onset, rng);
    if (tr.partner == 2) push_numeric(seq, onset, "lab_wbc", {wbc_at(tr, onset, rng)});
  }

  // periodic labs every ~8 h
  for (int64_t t = rng.uniform_int(5 * 60, 8 * 60); t < stay;
       t += rng.uniform_int(5 * 60, 8 * 60)) {
    if (rng.bernoulli(0.8)) lab_draw(seq, tr, clamp_t(t), rng);
  }

  // background noise: oral meds, the odd IV fluid, procedures
  {
    const int n_oral = static_cast<int>(rng.uniform_int(0, 4));
    for (int k = 0; k < n_oral; ++k)
      push_code(seq, clamp_t(rng.uniform_int(0, stay)), "med_oral", pick(kOralMeds, rng));
    if (rng.bernoulli(0.3)) {
      const int n_iv = static_cast<int>(rng.uniform_int(1, 2));
      for (int k = 0; k < n_iv; ++k)
        push_code(seq, clamp_t(rng.uniform_int(0, stay)), "med_iv", pick(kIvFluids, rng));
    }
    const int n_proc = static_cast<int>(rng.uniform_int(0, 2));
    for (int k = 0; k < n_proc; ++k)
      push_code(seq, clamp_t(rng.uniform_int(0, stay)), "proc_ncsp", pick(kProcedures, rng));
  }

  if (positive) {
    // sepsis response at onset: IV antibiotics always, culture usually
    push_code(seq, clamp_t(onset + rng.uniform_int(10, 120)), "med_iv", pick(kAntibiotics, rng));
    if (rng.bernoulli(0.8))
      push_code(seq, clamp_t(onset + rng.uniform_int(0, 60)), "microbio_culture", "blood");
    // a fraction already has an intervention running before onset
    if (rng.bernoulli(cfg.intervention_fraction)) {
      const int64_t lead =
          rng.uniform_int(static_cast<int64_t>(cfg.intervention_lead_min_h * 60),
                          static_cast<int64_t>(cfg.intervention_lead_max_h * 60));
      const int64_t t0 = std::max<int64_t>(0, onset - lead);
      const bool culture = rng.bernoulli(0.75);
      const bool anti = rng.bernoulli(0.75);
      if (culture || !anti) push_code(seq, clamp_t(t0), "microbio_culture", "blood");
      if (anti)
        push_code(seq, clamp_t(t0 + rng.uniform_int(0, 120)), "med_iv", pick(kAntibiotics, rng));
    }
    // discharge coding
    if (rng.bernoulli(0.7)) push_code(seq, clamp_t(stay - 10), "diag_icd10", "A419");
  } else {
    if (rng.bernoulli(0.10))
      push_code(seq, clamp_t(rng.uniform_int(60, std::max<int64_t>(61, stay - 60))),
                "microbio_culture", "blood");
    if (rng.bernoulli(0.08))
      push_code(seq, clamp_t(rng.uniform_int(60, std::max<int64_t>(61, stay - 60))), "med_iv",
                pick(kAntibiotics, rng));
  }

  seq.sort_by_time();
  return adm;
}

}  // namespace

std::vector<Admission> generate_cohort(const CohortConfig& cfg, int workers) {
  if (cfg.n_admissions <= 0) throw std::runtime_error("cohort size must be positive");
  if (cfg.departments.empty()) throw std::runtime_error("cohort needs at least one department");
  double weight_sum = 0.0;
  for (const auto& d : cfg.departments) {
    if (d.prevalence < 0.0 || d.prevalence > 1.0)
      throw std::runtime_error("department prevalence outside [0, 1]: " + d.name);
    weight_sum += d.weight;
  }
  if (weight_sum <= 0.0)
    throw std::runtime_error("department weights must sum to a positive value");
  if (cfg.onset_min < 6 * 60)
    throw std::runtime_error("onset_min under six hours cannot satisfy the admission margins");

  std::vector<double> weights;
  for (const auto& d : cfg.departments) weights.push_back(d.weight / weight_sum);

  std::vector<Admission> out(static_cast<size_t>(cfg.n_admissions));
  parallel_for(out.size(), workers,
               [&](size_t i) { out[i] = generate_admission(i, cfg, weights); });
  return out;
}

ValidationReport validate_cohort(std::span<const cohort::Admission> admissions,
                                 const CohortConfig& cfg,
                                 const cohort::LabelConfig& label_cfg) {
  ValidationReport report;
  report.n_admissions = static_cast<int64_t>(admissions.size());
  if (admissions.empty()) {
    report.flagged_empty = true;
    report.all_pass = false;
    report.checks.push_back({"non_empty_cohort", 1, 0, 0, false});
    return report;
  }

  const cohort::VitalSpec vitals = cohort::VitalSpec::defaults();
  std::map<std::string, std::pair<int64_t, int64_t>> dept_counts;
  std::vector<std::pair<const cohort::Admission*, int64_t>> positives;
  for (const auto& adm : admissions) {
    if (adm.contact != ContactType::Inpatient) continue;
    ++report.n_inpatient;
    cohort::LabelRecord rec = cohort::label_admission(adm, label_cfg);
    auto& [pos, total] = dept_counts[adm.department];
    ++total;
    if (rec.positive()) {
      ++pos;
      ++report.n_labeled_positive;
      positives.emplace_back(&adm, rec.label_time);
    }
  }

  auto add_check = [&](const std::string& name, double target, double measured, double tol) {
    ValidationCheck c{name, target, measured, tol, std::abs(measured - target) <= tol};
    report.all_pass = report.all_pass && c.pass;
    report.checks.push_back(c);
  };

  // per-department prevalence vs config
  for (const auto& d : cfg.departments) {
    auto it = dept_counts.find(d.name);
    if (it == dept_counts.end() || it->second.second == 0) continue;
    const double measured =
        static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    const double noise = 3.0 * std::sqrt(std::max(d.prevalence * (1.0 - d.prevalence), 0.01) /
                                         static_cast<double>(it->second.second));
    add_check("prevalence/" + d.name, d.prevalence, measured, 0.01 + noise);
  }
  {
    int64_t pos = 0, total = 0;
    for (const auto& [dept, counts] : dept_counts) {
      pos += counts.first;
      total += counts.second;
    }
    double expected = 0.0, wsum = 0.0;
    for (const auto& d : cfg.departments) {
      expected += d.weight * d.prevalence;
      wsum += d.weight;
    }
    expected /= wsum;
    const double noise =
        total > 0 ? 2.0 * std::sqrt(expected * (1.0 - expected) / static_cast<double>(total))
                  : 0.0;
    add_check("prevalence/overall", expected,
              total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0,
              0.01 + noise);
  }

  // vital completeness bands over labeled positives
  if (cfg.vital_profile == VitalProfile::Banded && !positives.empty()) {
    for (const auto& band : cfg.completeness_bands) {
      int64_t hit = 0;
      for (const auto& [adm, onset] : positives) {
        const int64_t lo = onset - static_cast<int64_t>(band.end_h * 60);
        const int64_t hi = onset - static_cast<int64_t>(band.start_h * 60);
        std::set<int> channels;
        for (const auto& ev : adm->sequence.events) {
          if (ev.time < lo || ev.time > hi) continue;
          for (int c = 0; c < vitals.count(); ++c) {
            const auto& ch = vitals.channels[static_cast<size_t>(c)];
            if (ev.category == ch.category && static_cast<int>(ev.values.size()) > ch.slot)
              channels.insert(c);
          }
        }
        if (channels.size() >= 2) ++hit;
      }
      const double measured = static_cast<double>(hit) / static_cast<double>(positives.size());
      char name[64];
      std::snprintf(name, sizeof(name), "completeness/t-%g_to_t-%g", band.end_h, band.start_h);
      add_check(name, band.target, measured,
                0.05 + 1.0 / std::sqrt(static_cast<double>(positives.size())));
    }
  }

  // every positive must carry a suspicion marker near onset
  {
    int64_t with_marker = 0;
    for (const auto& [adm, onset] : positives) {
      bool found = false;
      for (const auto& ev : adm->sequence.events) {
        const bool culture = ev.category == label_cfg.sources.blood_culture_category &&
                             ev.code == label_cfg.sources.blood_culture_code;
        const bool anti = ev.category == label_cfg.sources.iv_medication_category &&
                          cohort::ClinicalSources::anti_infective_code(ev.code);
        if ((culture || anti) && std::abs(ev.time - onset) <= 24 * 60) {
          found = true;
          break;
        }
      }
      if (found) ++with_marker;
    }
    add_check("positives_with_marker", 1.0,
              positives.empty()
                  ? 1.0
                  : static_cast<double>(with_marker) / static_cast<double>(positives.size()),
              0.0);
  }

  // structural: event times inside the stay
  {
    int64_t violations = 0;
    for (const auto& adm : admissions)
      for (const auto& ev : adm.sequence.events)
        if (ev.time < 0 || ev.time > adm.duration_min()) ++violations;
    add_check("event_times_within_stay", 0.0, static_cast<double>(violations), 0.0);
  }
  return report;
}

}  // namespace sepsis::synth
