#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepsis/cohort.hpp"
#include "sepsis/events.hpp"

namespace sepsis::features {

// Population fallback statistics per vital channel, fitted on training data.
struct VitalStats {
  std::vector<double> mean;  // one per VitalSpec channel

  static VitalStats physiological_defaults();
};

// 30 values (per vital: current-hour mean, prior-hour mean, hour-before mean,
// trend current-prior, trend prior-before) plus a parallel 30-entry missing
// mask appended as extra features.
struct GbVitalFeatures {
  static constexpr int kValuesPerVital = 5;
  std::vector<double> values;   // 6 * 5
  std::vector<double> missing;  // 1.0 where the bucket had no direct reading

  std::vector<double> flat() const;  // values ++ missing
  static std::vector<std::string> names(const cohort::VitalSpec& vitals);
};

// Hour buckets are (p-1h, p], (p-2h, p-1h], (p-3h, p-2h]. An empty bucket
// falls back to the last observation within 24h, then to the population
// mean; trends touching a fallback value are zero.
GbVitalFeatures gb_vital_features(const events::EventSequence& seq, int64_t prediction_time,
                                  const cohort::VitalSpec& vitals,
                                  const VitalStats& stats);

constexpr std::array<int, 6> kMlpWindowHours = {1, 2, 4, 8, 16, 32};

// Aggregates over retrospective windows (p-w, p], shortest first, with the
// context vector appended once. Width = 6 * aggregated_width + C.
events::SparseVector mlp_features(const events::EventSequence& seq,
                                  std::span<const double> context, int64_t prediction_time,
                                  const events::Vocabulary& vocab);

// Gap-filled five-minute sequence rows. Event columns are stored sparsely;
// the context block is shared across rows and appended logically at
// [event_width, event_width + context_width).
struct SequenceMatrix {
  int64_t first_block = 0;  // absolute block index floor(time / 5 min)
  int event_width = 0;      // aggregated event columns (K)
  std::vector<double> context;
  std::vector<std::vector<std::pair<int, double>>> rows;  // event part only

  int64_t n_rows() const { return static_cast<int64_t>(rows.size()); }
  int context_width() const { return static_cast<int>(context.size()); }
  int width() const { return event_width + context_width(); }
  std::vector<double> dense_row(int64_t r) const;
  // end of the block covered by row r, minutes on the admission axis
  int64_t row_end_time(int64_t r) const { return (first_block + r + 1) * kBlockMinutes; }
};

// Events after prediction_time never contribute; an empty sequence yields a
// single all-zero row with the context attached.
SequenceMatrix sequence_matrix(const events::EventSequence& seq,
                               std::span<const double> context,
                               const events::Vocabulary& vocab, int64_t prediction_time);

}  // namespace sepsis::features
