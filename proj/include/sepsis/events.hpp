#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sepsis::events {

enum class Kind { Numeric, Categorical, Hierarchical };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& s);

struct EventCategory {
  std::string id;
  Kind kind = Kind::Categorical;
  // number of measurements per event; >= 1 for numeric categories
  int arity = 1;
  // code prefix lengths defining the hierarchy levels, shortest first; a
  // prefix longer than the code collapses to the full code
  std::vector<int> hier_prefix_len;

  int level_count() const { return static_cast<int>(hier_prefix_len.size()); }
};

class CategoryCatalog {
 public:
  void add(EventCategory cat);
  const EventCategory* find(const std::string& id) const;
  const EventCategory& require(const std::string& id) const;
  const std::map<std::string, EventCategory>& all() const { return by_id_; }
  bool empty() const { return by_id_.empty(); }

 private:
  std::map<std::string, EventCategory> by_id_;
};

struct Event {
  int64_t time = 0;  // minutes since admission start
  std::string category;
  std::vector<double> values;  // numeric kind, length == arity
  std::string code;            // categorical / hierarchical kind

  bool has_code() const { return values.empty(); }
};

struct EventSequence {
  std::vector<Event> events;  // non-decreasing time, ties keep insertion order

  void sort_by_time();
  bool is_sorted() const;
  bool empty() const { return events.empty(); }
  size_t size() const { return events.size(); }
};

// Infers a catalog from observed data: numeric when events carry values
// (arity from value length), otherwise categorical, or hierarchical when the
// category id is listed in hierarchical_ids (default prefix levels 1/3/full).
CategoryCatalog infer_catalog(std::span<const EventSequence> sequences,
                              const std::vector<std::string>& hierarchical_ids = {});

struct SparseVector {
  int size = 0;
  std::vector<std::pair<int, double>> items;  // sorted by index

  double at(int idx) const;
  int nonzero_count() const;
};

struct VocabEntry {
  std::string category;
  std::string item;  // zero-padded slot for numeric, code (or level prefix) otherwise
  Kind kind = Kind::Categorical;
  int64_t support = 0;   // training sequences containing this entry
  double mean = 0.0;     // numeric normalizer, fitted on training values
  double stddev = 0.0;
};

// Hierarchy level prefixes for a code, deduplicated, order preserved.
std::vector<std::string> hierarchy_prefixes(const EventCategory& cat, const std::string& code);

std::string numeric_slot_item(int slot);

class Vocabulary {
 public:
  static constexpr int kSchemaVersion = 1;

  Vocabulary() = default;
  Vocabulary(CategoryCatalog catalog, std::vector<VocabEntry> entries, int64_t min_support);

  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<VocabEntry>& entries() const { return entries_; }
  const CategoryCatalog& catalog() const { return catalog_; }
  int64_t min_support() const { return min_support_; }

  const VocabEntry* entry(int idx) const;
  std::optional<int> index_of(const std::string& category, const std::string& item) const;

  // Aggregated layout: categorical/hierarchical entries take one count
  // column, numeric entries take (min, max, mean), plus one trailing
  // interval-presence flag column.
  int aggregated_width() const { return agg_width_; }
  int aggregated_offset(int entry_idx) const { return agg_offset_[entry_idx]; }
  int presence_flag_column() const { return agg_width_ - 1; }

 private:
  void build_index();

  CategoryCatalog catalog_;
  std::vector<VocabEntry> entries_;
  std::map<std::pair<std::string, std::string>, int> index_;
  std::vector<int> agg_offset_;
  int agg_width_ = 1;
  int64_t min_support_ = 1;
};

// Retains entries observed in >= min_support distinct sequences; index
// assignment is lexicographic by (category id, item). Numeric normalizers are
// fitted on the retained entries over all training values.
Vocabulary build_vocabulary(std::span<const EventSequence> train_sequences,
                            const CategoryCatalog& catalog, int64_t min_support);

SparseVector vectorize_event(const Event& event, const Vocabulary& vocab);

// Events must all lie within one interval; counts for code-valued entries,
// (min, max, mean) of normalized values for numeric entries, and a trailing
// presence flag (0 for an empty interval).
SparseVector aggregate_interval(std::span<const Event> events, const Vocabulary& vocab);

struct ContextMeta {
  std::optional<double> age_years;
  std::string sex;      // one of schema.sexes, anything else maps to all-zero
  std::string marital;  // likewise
  std::vector<std::string> comorbidities;  // prior-diagnosis codes
};

struct ContextSchema {
  double age_mean = 65.0;
  double age_std = 18.0;
  std::vector<std::string> sexes = {"female", "male"};
  std::vector<std::string> marital_statuses = {"single", "married", "divorced", "widowed"};
  std::vector<std::string> comorbidity_codes = {
      "B18", "C00", "D64", "E11", "E66", "E78", "F03", "G30", "I10", "I25",
      "I48", "I50", "J44", "J45", "K70", "L40", "M05", "N18", "N39"};

  int size() const {
    return 1 + static_cast<int>(sexes.size() + marital_statuses.size() +
                                comorbidity_codes.size());
  }
};

// Deterministic fixed-length vector: normalized age, one-hot sex, one-hot
// marital status, multi-hot comorbidities. Missing age is an error; unknown
// comorbidity codes are ignored.
std::vector<double> vectorize_context(const ContextMeta& meta, const ContextSchema& schema);

}  // namespace sepsis::events
