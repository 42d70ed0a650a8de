#include "sepsis/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sepsis::features {

VitalStats VitalStats::physiological_defaults() {
  // sbp, dbp, hr, rr, spo2, temp
  return VitalStats{{120.0, 75.0, 78.0, 16.0, 97.0, 37.0}};
}

std::vector<double> GbVitalFeatures::flat() const {
  std::vector<double> out = values;
  out.insert(out.end(), missing.begin(), missing.end());
  return out;
}

std::vector<std::string> GbVitalFeatures::names(const cohort::VitalSpec& vitals) {
  static const char* parts[kValuesPerVital] = {"mean_h0", "mean_h1", "mean_h2", "trend_01",
                                               "trend_12"};
  std::vector<std::string> out;
  for (const auto& ch : vitals.channels)
    for (const char* p : parts) out.push_back(ch.name + "_" + p);
  for (const auto& ch : vitals.channels)
    for (const char* p : parts) out.push_back("missing_" + ch.name + "_" + p);
  return out;
}

GbVitalFeatures gb_vital_features(const events::EventSequence& seq, int64_t prediction_time,
                                  const cohort::VitalSpec& vitals, const VitalStats& stats) {
  if (prediction_time < 0) throw std::runtime_error("prediction time must be >= 0");
  if (stats.mean.size() != static_cast<size_t>(vitals.count()))
    throw std::runtime_error("vital stats do not match the vital spec");

  const int n_ch = vitals.count();
  GbVitalFeatures out;
  out.values.assign(static_cast<size_t>(n_ch) * GbVitalFeatures::kValuesPerVital, 0.0);
  out.missing.assign(out.values.size(), 0.0);

  for (int c = 0; c < n_ch; ++c) {
    const auto& ch = vitals.channels[static_cast<size_t>(c)];
    double bucket_mean[3] = {0, 0, 0};
    bool bucket_missing[3] = {false, false, false};
    for (int b = 0; b < 3; ++b) {
      const int64_t hi = prediction_time - static_cast<int64_t>(b) * kMinutesPerHour;
      const int64_t lo = hi - kMinutesPerHour;
      double sum = 0.0;
      int64_t n = 0;
      for (const auto& ev : seq.events) {
        if (ev.time <= lo || ev.time > hi) continue;
        if (ev.category != ch.category || static_cast<int>(ev.values.size()) <= ch.slot)
          continue;
        sum += ev.values[static_cast<size_t>(ch.slot)];
        ++n;
      }
      if (n > 0) {
        bucket_mean[b] = sum / static_cast<double>(n);
        continue;
      }
      bucket_missing[b] = true;
      // last observation carried forward within 24 h of the bucket end
      bool found = false;
      double carried = 0.0;
      for (const auto& ev : seq.events) {
        if (ev.time > hi) break;
        if (ev.time <= hi - 24 * kMinutesPerHour) continue;
        if (ev.category != ch.category || static_cast<int>(ev.values.size()) <= ch.slot)
          continue;
        carried = ev.values[static_cast<size_t>(ch.slot)];
        found = true;
      }
      bucket_mean[b] = found ? carried : stats.mean[static_cast<size_t>(c)];
    }

    const size_t base = static_cast<size_t>(c) * GbVitalFeatures::kValuesPerVital;
    for (int b = 0; b < 3; ++b) {
      out.values[base + static_cast<size_t>(b)] = bucket_mean[b];
      out.missing[base + static_cast<size_t>(b)] = bucket_missing[b] ? 1.0 : 0.0;
    }
    const bool t01_bad = bucket_missing[0] || bucket_missing[1];
    const bool t12_bad = bucket_missing[1] || bucket_missing[2];
    out.values[base + 3] = t01_bad ? 0.0 : bucket_mean[0] - bucket_mean[1];
    out.values[base + 4] = t12_bad ? 0.0 : bucket_mean[1] - bucket_mean[2];
    out.missing[base + 3] = t01_bad ? 1.0 : 0.0;
    out.missing[base + 4] = t12_bad ? 1.0 : 0.0;
  }
  return out;
}

events::SparseVector mlp_features(const events::EventSequence& seq,
                                  std::span<const double> context, int64_t prediction_time,
                                  const events::Vocabulary& vocab) {
  const int agg_w = vocab.aggregated_width();
  events::SparseVector out;
  out.size = static_cast<int>(kMlpWindowHours.size()) * agg_w + static_cast<int>(context.size());

  std::vector<events::Event> in_window;
  for (size_t w = 0; w < kMlpWindowHours.size(); ++w) {
    const int64_t lo = prediction_time - kMlpWindowHours[w] * kMinutesPerHour;
    in_window.clear();
    for (const auto& ev : seq.events)
      if (ev.time > lo && ev.time <= prediction_time) in_window.push_back(ev);
    events::SparseVector agg = events::aggregate_interval(in_window, vocab);
    const int base = static_cast<int>(w) * agg_w;
    for (const auto& [idx, v] : agg.items) out.items.emplace_back(base + idx, v);
  }
  const int ctx_base = static_cast<int>(kMlpWindowHours.size()) * agg_w;
  for (size_t i = 0; i < context.size(); ++i)
    if (context[i] != 0.0) out.items.emplace_back(ctx_base + static_cast<int>(i), context[i]);
  return out;
}

std::vector<double> SequenceMatrix::dense_row(int64_t r) const {
  std::vector<double> out(static_cast<size_t>(width()), 0.0);
  for (const auto& [c, v] : rows[static_cast<size_t>(r)]) out[static_cast<size_t>(c)] = v;
  for (size_t i = 0; i < context.size(); ++i)
    out[static_cast<size_t>(event_width) + i] = context[i];
  return out;
}

SequenceMatrix sequence_matrix(const events::EventSequence& seq,
                               std::span<const double> context,
                               const events::Vocabulary& vocab, int64_t prediction_time) {
  SequenceMatrix m;
  m.event_width = vocab.aggregated_width();
  m.context.assign(context.begin(), context.end());

  std::vector<events::Event> usable;
  for (const auto& ev : seq.events)
    if (ev.time <= prediction_time && ev.time > prediction_time - kMaxWindowMinutes)
      usable.push_back(ev);

  if (usable.empty()) {
    m.first_block = std::max<int64_t>(0, prediction_time / kBlockMinutes);
    m.rows.emplace_back();  // single all-zero row, context still attached
    return m;
  }

  int64_t last_block = usable.back().time / kBlockMinutes;
  int64_t first_block = usable.front().time / kBlockMinutes;
  // five-day cap: at most 1440 equidistant rows, oldest partial block trimmed
  first_block = std::max(first_block, last_block - (kMaxWindowMinutes / kBlockMinutes) + 1);
  m.first_block = first_block;
  m.rows.resize(static_cast<size_t>(last_block - first_block + 1));

  size_t i = 0;
  std::vector<events::Event> block;
  while (i < usable.size()) {
    const int64_t b = usable[i].time / kBlockMinutes;
    block.clear();
    while (i < usable.size() && usable[i].time / kBlockMinutes == b) block.push_back(usable[i++]);
    if (b < first_block) continue;
    events::SparseVector agg = events::aggregate_interval(block, vocab);
    m.rows[static_cast<size_t>(b - first_block)].assign(agg.items.begin(), agg.items.end());
  }
  return m;
}

}  // namespace sepsis::features
