#include "sepsis/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace sepsis::cohort {

VitalSpec VitalSpec::defaults() {
  VitalSpec v;
  v.channels = {
      {"sbp", "vs_bp", 0},   {"dbp", "vs_bp", 1},   {"hr", "vs_hr", 0},
      {"rr", "vs_rr", 0},    {"spo2", "vs_spo2", 0}, {"temp", "vs_temp", 0},
  };
  return v;
}

SirsFlags sirs_flags(const events::EventSequence& seq, int64_t at_min, double window_h,
                     const ClinicalSources& src) {
  if (window_h <= 0) throw std::runtime_error("sirs window must be positive");
  const int64_t lo = at_min - static_cast<int64_t>(window_h * kMinutesPerHour);
  SirsFlags flags;
  for (const auto& ev : seq.events) {
    if (ev.time <= lo) continue;
    if (ev.time > at_min) break;  // sequence sorted by time
    if (ev.values.empty()) continue;
    const double v = ev.values.front();
    if (ev.category == src.heart_rate_category) {
      if (v > 90.0) flags.heart_rate = true;
    } else if (ev.category == src.temperature_category) {
      if (v > 38.0 || v < 36.0) flags.temperature = true;
    } else if (ev.category == src.respiratory_rate_category) {
      if (v > 20.0) flags.respiration = true;
    } else if (ev.category == src.paco2_category) {
      if (v < 32.0) flags.respiration = true;
    } else if (ev.category == src.wbc_category) {
      if (v > 12.0 || v < 4.0) flags.white_cells = true;
    }
  }
  return flags;
}

namespace {

std::vector<int64_t> suspicion_marker_times(const events::EventSequence& seq,
                                            const ClinicalSources& src) {
  std::vector<int64_t> times;
  for (const auto& ev : seq.events) {
    if (ev.category == src.blood_culture_category &&
        (src.blood_culture_code.empty() || ev.code == src.blood_culture_code)) {
      times.push_back(ev.time);
    } else if (ev.category == src.iv_medication_category &&
               ClinicalSources::anti_infective_code(ev.code)) {
      times.push_back(ev.time);
    }
  }
  return times;  // sorted because the sequence is
}

bool marker_within(const std::vector<int64_t>& times, int64_t at, int64_t lookaround) {
  auto it = std::lower_bound(times.begin(), times.end(), at - lookaround);
  return it != times.end() && *it <= at + lookaround;
}

}  // namespace

namespace {

bool any_in_window(const std::vector<int64_t>& times, int64_t lo_excl, int64_t hi_incl) {
  auto it = std::upper_bound(times.begin(), times.end(), lo_excl);
  return it != times.end() && *it <= hi_incl;
}

}  // namespace

LabelRecord label_admission(const Admission& adm, const LabelConfig& cfg) {
  if (adm.sequence.empty()) throw std::runtime_error("cannot label an empty sequence: " + adm.id);
  const auto markers = suspicion_marker_times(adm.sequence, cfg.sources);
  LabelRecord rec;
  if (markers.empty()) return rec;

  // Times at which each criterion has a qualifying measurement.
  std::vector<int64_t> hit[4];
  const ClinicalSources& src = cfg.sources;
  for (const auto& ev : adm.sequence.events) {
    if (ev.values.empty()) continue;
    const double v = ev.values.front();
    if (ev.category == src.heart_rate_category && v > 90.0) hit[0].push_back(ev.time);
    else if (ev.category == src.temperature_category && (v > 38.0 || v < 36.0))
      hit[1].push_back(ev.time);
    else if (ev.category == src.respiratory_rate_category && v > 20.0) hit[2].push_back(ev.time);
    else if (ev.category == src.paco2_category && v < 32.0) hit[2].push_back(ev.time);
    else if (ev.category == src.wbc_category && (v > 12.0 || v < 4.0)) hit[3].push_back(ev.time);
  }
  for (auto& h : hit) std::sort(h.begin(), h.end());

  const int64_t window = static_cast<int64_t>(cfg.sirs_window_h * kMinutesPerHour);
  const int64_t lookaround =
      static_cast<int64_t>(cfg.suspicion_lookaround_h * kMinutesPerHour);
  int64_t prev = -1;
  for (const auto& ev : adm.sequence.events) {
    if (ev.time == prev) continue;  // flags only change at new timestamps
    prev = ev.time;
    int satisfied = 0;
    for (const auto& h : hit)
      if (any_in_window(h, ev.time - window, ev.time)) ++satisfied;
    if (satisfied < 2) continue;
    if (!marker_within(markers, ev.time, lookaround)) continue;
    rec.label = Label::Positive;
    rec.label_time = ev.time;
    rec.onset_criteria = sirs_flags(adm.sequence, ev.time, cfg.sirs_window_h, cfg.sources);
    return rec;
  }
  return rec;
}

int64_t choose_label_time(const Admission& adm, const LabelRecord& rec, Rng& rng) {
  if (rec.positive()) return rec.label_time;
  const int64_t margin = 3 * kMinutesPerHour;
  const int64_t stay = adm.duration_min();
  if (stay <= 2 * margin)
    throw std::runtime_error("negative admission too short to place a label time: " + adm.id);
  return rng.uniform_int(margin, stay - margin);
}

events::EventSequence clip_window(const events::EventSequence& seq, int64_t label_time,
                                  int max_days) {
  const int64_t lo = std::max<int64_t>(0, label_time - static_cast<int64_t>(max_days) * 24 * 60);
  events::EventSequence out;
  for (const auto& ev : seq.events)
    if (ev.time >= lo && ev.time <= label_time) out.events.push_back(ev);
  return out;
}

IncludedCohort apply_inclusion(std::span<const Admission> admissions,
                               const InclusionConfig& cfg) {
  IncludedCohort out;
  const int64_t n_input = static_cast<int64_t>(admissions.size());
  out.flow.push_back({"input", 0, n_input});

  std::vector<size_t> stage;
  for (size_t i = 0; i < admissions.size(); ++i)
    if (admissions[i].contact == ContactType::Inpatient) stage.push_back(i);
  out.flow.push_back({"outpatient_contacts_removed",
                      n_input - static_cast<int64_t>(stage.size()),
                      static_cast<int64_t>(stage.size())});

  const int64_t min_dur = static_cast<int64_t>(cfg.min_duration_h * kMinutesPerHour);
  std::vector<size_t> long_enough;
  for (size_t i : stage)
    if (admissions[i].duration_min() >= min_dur) long_enough.push_back(i);
  out.flow.push_back({"short_admissions_removed",
                      static_cast<int64_t>(stage.size() - long_enough.size()),
                      static_cast<int64_t>(long_enough.size())});

  // Label the survivors, then drop departments under the prevalence floor.
  std::map<std::string, std::pair<int64_t, int64_t>> dept_counts;  // positives, total
  for (size_t i : long_enough) {
    LabelRecord rec = label_admission(admissions[i], cfg.label);
    out.labels[admissions[i].id] = rec;
    auto& [pos, total] = dept_counts[admissions[i].department];
    if (rec.positive()) ++pos;
    ++total;
  }
  std::set<std::string> kept_depts;
  for (const auto& [dept, counts] : dept_counts) {
    double prevalence =
        counts.second > 0 ? static_cast<double>(counts.first) / counts.second : 0.0;
    if (prevalence >= cfg.min_dept_prevalence) kept_depts.insert(dept);
  }
  for (size_t i : long_enough)
    if (kept_depts.count(admissions[i].department)) out.kept.push_back(i);
  out.flow.push_back({"low_prevalence_departments_removed",
                      static_cast<int64_t>(long_enough.size() - out.kept.size()),
                      static_cast<int64_t>(out.kept.size())});

  // Labels for excluded admissions are dropped so the map mirrors `kept`.
  std::set<std::string> kept_ids;
  for (size_t i : out.kept) kept_ids.insert(admissions[i].id);
  for (auto it = out.labels.begin(); it != out.labels.end();)
    it = kept_ids.count(it->first) ? std::next(it) : out.labels.erase(it);
  return out;
}

std::vector<size_t> vital_sign_subset(std::span<const Admission> admissions,
                                      const std::map<std::string, LabelRecord>& labels,
                                      const VitalSpec& vitals, double window_h) {
  const int64_t window = static_cast<int64_t>(window_h * kMinutesPerHour);
  std::vector<size_t> out;
  for (size_t i = 0; i < admissions.size(); ++i) {
    auto it = labels.find(admissions[i].id);
    if (it == labels.end() || it->second.label_time < 0) continue;
    const int64_t t = it->second.label_time;
    std::set<int> seen;
    for (const auto& ev : admissions[i].sequence.events) {
      if (ev.time <= t - window || ev.time > t) continue;
      for (int c = 0; c < vitals.count(); ++c) {
        const auto& ch = vitals.channels[static_cast<size_t>(c)];
        if (ev.category == ch.category && static_cast<int>(ev.values.size()) > ch.slot)
          seen.insert(c);
      }
    }
    if (static_cast<int>(seen.size()) == vitals.count()) out.push_back(i);
  }
  return out;
}

namespace {

// Sort then seeded Fisher-Yates: the outcome depends only on the id set and
// the seed, not the caller's ordering.
std::vector<std::string> shuffled(std::vector<std::string> ids, Rng& rng) {
  std::sort(ids.begin(), ids.end());
  for (size_t i = ids.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

void partition(const std::vector<std::string>& ids, const double fractions[3],
               std::vector<std::string>& train, std::vector<std::string>& val,
               std::vector<std::string>& test) {
  const size_t n = ids.size();
  size_t n_train = static_cast<size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  size_t n_val = static_cast<size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  val.assign(ids.begin() + static_cast<long>(n_train),
             ids.begin() + static_cast<long>(n_train + n_val));
  test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
}

}  // namespace

DatasetSplit make_splits(const std::vector<std::string>& positive_ids,
                         const std::vector<std::string>& negative_ids, const SplitConfig& cfg) {
  DatasetSplit split;
  split.manifest = cfg;

  Rng pos_rng(mix_seed(cfg.seed, 1));
  Rng neg_rng(mix_seed(cfg.seed, 2));
  std::vector<std::string> pos = shuffled(positive_ids, pos_rng);
  std::vector<std::string> neg = shuffled(negative_ids, neg_rng);

  std::vector<std::string> pos_val, pos_test, neg_val, neg_test;
  partition(pos, cfg.fractions, split.train_pos, pos_val, pos_test);
  partition(neg, cfg.fractions, split.train_neg, neg_val, neg_test);

  split.val_ids = pos_val;
  split.val_ids.insert(split.val_ids.end(), neg_val.begin(), neg_val.end());
  split.test_ids = pos_test;
  split.test_ids.insert(split.test_ids.end(), neg_test.begin(), neg_test.end());

  const size_t pos_instances = split.train_pos.size() * static_cast<size_t>(cfg.oversample);
  const size_t neg_needed = pos_instances * static_cast<size_t>(cfg.neg_ratio);
  if (neg_needed > split.train_neg.size())
    throw std::runtime_error(
        "insufficient training negatives: need " + std::to_string(neg_needed) + ", have " +
        std::to_string(split.train_neg.size()));

  split.train_instances.reserve(pos_instances + neg_needed);
  for (int k = 0; k < cfg.oversample; ++k)
    for (const auto& id : split.train_pos) split.train_instances.push_back(id);
  // train_neg is already seeded-shuffled; the sample is its prefix
  for (size_t i = 0; i < neg_needed; ++i) split.train_instances.push_back(split.train_neg[i]);
  return split;
}

}  // namespace sepsis::cohort
