#include "sepsis/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace sepsis::events {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Numeric: return "numeric";
    case Kind::Categorical: return "categorical";
    case Kind::Hierarchical: return "hierarchical";
  }
  return "categorical";
}

Kind kind_from_name(const std::string& s) {
  if (s == "numeric") return Kind::Numeric;
  if (s == "categorical") return Kind::Categorical;
  if (s == "hierarchical") return Kind::Hierarchical;
  throw std::runtime_error("unknown category kind: " + s);
}

void CategoryCatalog::add(EventCategory cat) {
  if (cat.kind == Kind::Numeric && cat.arity < 1)
    throw std::runtime_error("numeric category arity must be >= 1: " + cat.id);
  if (cat.kind == Kind::Hierarchical && cat.hier_prefix_len.empty())
    throw std::runtime_error("hierarchical category needs at least one level: " + cat.id);
  by_id_[cat.id] = std::move(cat);
}

const EventCategory* CategoryCatalog::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

const EventCategory& CategoryCatalog::require(const std::string& id) const {
  const EventCategory* c = find(id);
  if (!c) throw std::runtime_error("unknown event category: " + id);
  return *c;
}

void EventSequence::sort_by_time() {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });
}

bool EventSequence::is_sorted() const {
  for (size_t i = 1; i < events.size(); ++i)
    if (events[i].time < events[i - 1].time) return false;
  return true;
}

CategoryCatalog infer_catalog(std::span<const EventSequence> sequences,
                              const std::vector<std::string>& hierarchical_ids) {
  std::set<std::string> hier(hierarchical_ids.begin(), hierarchical_ids.end());
  CategoryCatalog catalog;
  std::map<std::string, EventCategory> seen;
  for (const auto& seq : sequences) {
    for (const auto& ev : seq.events) {
      auto it = seen.find(ev.category);
      if (it == seen.end()) {
        EventCategory cat;
        cat.id = ev.category;
        if (!ev.values.empty()) {
          cat.kind = Kind::Numeric;
          cat.arity = static_cast<int>(ev.values.size());
        } else if (hier.count(ev.category)) {
          cat.kind = Kind::Hierarchical;
          cat.hier_prefix_len = {1, 3, 64};
        } else {
          cat.kind = Kind::Categorical;
        }
        seen[ev.category] = cat;
      } else {
        const EventCategory& cat = it->second;
        bool numeric_event = !ev.values.empty();
        if ((cat.kind == Kind::Numeric) != numeric_event)
          throw std::runtime_error("category " + ev.category +
                                   " mixes numeric and code values");
        if (cat.kind == Kind::Numeric && static_cast<int>(ev.values.size()) != cat.arity)
          throw std::runtime_error("category " + ev.category +
                                   " has inconsistent measurement count");
      }
    }
  }
  for (auto& [id, cat] : seen) catalog.add(cat);
  return catalog;
}

double SparseVector::at(int idx) const {
  for (const auto& [i, v] : items)
    if (i == idx) return v;
  return 0.0;
}

int SparseVector::nonzero_count() const {
  int n = 0;
  for (const auto& [i, v] : items)
    if (v != 0.0) ++n;
  return n;
}

std::vector<std::string> hierarchy_prefixes(const EventCategory& cat, const std::string& code) {
  std::vector<std::string> out;
  for (int len : cat.hier_prefix_len) {
    size_t n = std::min<size_t>(static_cast<size_t>(len), code.size());
    std::string prefix = code.substr(0, n);
    if (prefix.empty()) continue;
    if (std::find(out.begin(), out.end(), prefix) == out.end()) out.push_back(prefix);
  }
  return out;
}

std::string numeric_slot_item(int slot) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", slot);
  return std::string(buf);
}

Vocabulary::Vocabulary(CategoryCatalog catalog, std::vector<VocabEntry> entries,
                       int64_t min_support)
    : catalog_(std::move(catalog)), entries_(std::move(entries)), min_support_(min_support) {
  build_index();
}

void Vocabulary::build_index() {
  index_.clear();
  agg_offset_.assign(entries_.size(), 0);
  int off = 0;
  for (size_t i = 0; i < entries_.size(); ++i) {
    index_[{entries_[i].category, entries_[i].item}] = static_cast<int>(i);
    agg_offset_[i] = off;
    off += entries_[i].kind == Kind::Numeric ? 3 : 1;
  }
  agg_width_ = off + 1;  // trailing presence flag
}

const VocabEntry* Vocabulary::entry(int idx) const {
  if (idx < 0 || idx >= size()) return nullptr;
  return &entries_[static_cast<size_t>(idx)];
}

std::optional<int> Vocabulary::index_of(const std::string& category,
                                        const std::string& item) const {
  auto it = index_.find({category, item});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Keys an event contributes to, given the catalog. Numeric events contribute
// every slot; hierarchical events contribute one key per present level.
void event_keys(const Event& ev, const EventCategory& cat,
                std::vector<std::pair<std::string, std::string>>& out) {
  out.clear();
  switch (cat.kind) {
    case Kind::Numeric: {
      if (static_cast<int>(ev.values.size()) != cat.arity)
        throw std::runtime_error("event value count does not match category arity: " + cat.id);
      for (int s = 0; s < cat.arity; ++s) out.emplace_back(cat.id, numeric_slot_item(s));
      break;
    }
    case Kind::Categorical:
      out.emplace_back(cat.id, ev.code);
      break;
    case Kind::Hierarchical:
      for (const auto& p : hierarchy_prefixes(cat, ev.code)) out.emplace_back(cat.id, p);
      break;
  }
}

}  // namespace

Vocabulary build_vocabulary(std::span<const EventSequence> train_sequences,
                            const CategoryCatalog& catalog, int64_t min_support) {
  if (train_sequences.empty()) throw std::runtime_error("empty training corpus");
  if (min_support < 1) throw std::runtime_error("min_support must be >= 1");

  // support = number of distinct sequences containing the entry
  std::map<std::pair<std::string, std::string>, int64_t> support;
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& seq : train_sequences) {
    std::set<std::pair<std::string, std::string>> in_seq;
    for (const auto& ev : seq.events) {
      const EventCategory& cat = catalog.require(ev.category);
      event_keys(ev, cat, keys);
      for (auto& k : keys) in_seq.insert(std::move(k));
    }
    for (const auto& k : in_seq) support[k] += 1;
  }

  std::vector<VocabEntry> entries;
  for (const auto& [key, count] : support) {
    if (count < min_support) continue;
    VocabEntry e;
    e.category = key.first;
    e.item = key.second;
    e.kind = catalog.require(key.first).kind;
    e.support = count;
    entries.push_back(std::move(e));
  }
  // std::map iteration is already lexicographic by (category, item); keep the
  // explicit sort as the documented contract.
  std::sort(entries.begin(), entries.end(), [](const VocabEntry& a, const VocabEntry& b) {
    return std::tie(a.category, a.item) < std::tie(b.category, b.item);
  });

  Vocabulary vocab(catalog, std::move(entries), min_support);

  // Two-pass moment fit for the retained numeric entries, training values only.
  std::vector<double> sum(static_cast<size_t>(vocab.size()), 0.0);
  std::vector<int64_t> n(static_cast<size_t>(vocab.size()), 0);
  for (const auto& seq : train_sequences) {
    for (const auto& ev : seq.events) {
      const EventCategory& cat = catalog.require(ev.category);
      if (cat.kind != Kind::Numeric) continue;
      for (int s = 0; s < cat.arity; ++s) {
        auto idx = vocab.index_of(cat.id, numeric_slot_item(s));
        if (!idx) continue;
        sum[static_cast<size_t>(*idx)] += ev.values[static_cast<size_t>(s)];
        n[static_cast<size_t>(*idx)] += 1;
      }
    }
  }
  std::vector<double> mean(static_cast<size_t>(vocab.size()), 0.0);
  for (int i = 0; i < vocab.size(); ++i)
    if (n[static_cast<size_t>(i)] > 0)
      mean[static_cast<size_t>(i)] = sum[static_cast<size_t>(i)] / n[static_cast<size_t>(i)];
  std::vector<double> sq(static_cast<size_t>(vocab.size()), 0.0);
  for (const auto& seq : train_sequences) {
    for (const auto& ev : seq.events) {
      const EventCategory& cat = catalog.require(ev.category);
      if (cat.kind != Kind::Numeric) continue;
      for (int s = 0; s < cat.arity; ++s) {
        auto idx = vocab.index_of(cat.id, numeric_slot_item(s));
        if (!idx) continue;
        double d = ev.values[static_cast<size_t>(s)] - mean[static_cast<size_t>(*idx)];
        sq[static_cast<size_t>(*idx)] += d * d;
      }
    }
  }

  std::vector<VocabEntry> fitted = vocab.entries();
  for (size_t i = 0; i < fitted.size(); ++i) {
    if (fitted[i].kind != Kind::Numeric) continue;
    fitted[i].mean = mean[i];
    fitted[i].stddev = n[i] > 0 ? std::sqrt(sq[i] / static_cast<double>(n[i])) : 0.0;
  }
  return Vocabulary(catalog, std::move(fitted), min_support);
}

namespace {

double normalize_value(const VocabEntry& e, double v) {
  if (e.stddev <= 0.0) return 0.0;
  return (v - e.mean) / e.stddev;
}

}  // namespace

SparseVector vectorize_event(const Event& event, const Vocabulary& vocab) {
  SparseVector out;
  out.size = vocab.size();
  const EventCategory* cat_ptr = vocab.catalog().find(event.category);
  if (!cat_ptr) return out;  // unknown category at inference, dropped
  const EventCategory& cat = *cat_ptr;
  switch (cat.kind) {
    case Kind::Numeric: {
      if (static_cast<int>(event.values.size()) != cat.arity)
        throw std::runtime_error("event value count does not match category arity: " + cat.id);
      for (int s = 0; s < cat.arity; ++s) {
        auto idx = vocab.index_of(cat.id, numeric_slot_item(s));
        if (!idx) continue;  // out of vocabulary, dropped
        out.items.emplace_back(*idx,
                               normalize_value(*vocab.entry(*idx), event.values[(size_t)s]));
      }
      break;
    }
    case Kind::Categorical: {
      auto idx = vocab.index_of(cat.id, event.code);
      if (idx) out.items.emplace_back(*idx, 1.0);
      break;
    }
    case Kind::Hierarchical: {
      for (const auto& p : hierarchy_prefixes(cat, event.code)) {
        auto idx = vocab.index_of(cat.id, p);
        if (idx) out.items.emplace_back(*idx, 1.0);
      }
      break;
    }
  }
  std::sort(out.items.begin(), out.items.end());
  return out;
}

SparseVector aggregate_interval(std::span<const Event> events, const Vocabulary& vocab) {
  SparseVector out;
  out.size = vocab.aggregated_width();
  if (events.empty()) return out;  // all-zero vector, presence flag stays 0

  struct NumAgg {
    double min = 0, max = 0, sum = 0;
    int64_t n = 0;
  };
  std::map<int, double> counts;
  std::map<int, NumAgg> numerics;

  for (const auto& ev : events) {
    const EventCategory* cat_ptr = vocab.catalog().find(ev.category);
    if (!cat_ptr) continue;  // unknown category at inference, dropped
    const EventCategory& cat = *cat_ptr;
    switch (cat.kind) {
      case Kind::Numeric: {
        if (static_cast<int>(ev.values.size()) != cat.arity)
          throw std::runtime_error("event value count does not match category arity: " + cat.id);
        for (int s = 0; s < cat.arity; ++s) {
          auto idx = vocab.index_of(cat.id, numeric_slot_item(s));
          if (!idx) continue;
          double v = normalize_value(*vocab.entry(*idx), ev.values[(size_t)s]);
          NumAgg& agg = numerics[*idx];
          if (agg.n == 0) {
            agg.min = agg.max = v;
          } else {
            agg.min = std::min(agg.min, v);
            agg.max = std::max(agg.max, v);
          }
          agg.sum += v;
          agg.n += 1;
        }
        break;
      }
      case Kind::Categorical: {
        auto idx = vocab.index_of(cat.id, ev.code);
        if (idx) counts[*idx] += 1.0;
        break;
      }
      case Kind::Hierarchical: {
        for (const auto& p : hierarchy_prefixes(cat, ev.code)) {
          auto idx = vocab.index_of(cat.id, p);
          if (idx) counts[*idx] += 1.0;
        }
        break;
      }
    }
  }

  for (const auto& [idx, c] : counts)
    out.items.emplace_back(vocab.aggregated_offset(idx), c);
  for (const auto& [idx, agg] : numerics) {
    int off = vocab.aggregated_offset(idx);
    out.items.emplace_back(off + 0, agg.min);
    out.items.emplace_back(off + 1, agg.max);
    out.items.emplace_back(off + 2, agg.sum / static_cast<double>(agg.n));
  }
  out.items.emplace_back(vocab.presence_flag_column(), 1.0);
  std::sort(out.items.begin(), out.items.end());
  return out;
}

std::vector<double> vectorize_context(const ContextMeta& meta, const ContextSchema& schema) {
  if (!meta.age_years.has_value()) throw std::runtime_error("context is missing age");
  std::vector<double> out(static_cast<size_t>(schema.size()), 0.0);
  size_t pos = 0;
  out[pos++] = schema.age_std > 0.0 ? (*meta.age_years - schema.age_mean) / schema.age_std : 0.0;
  for (size_t i = 0; i < schema.sexes.size(); ++i)
    if (schema.sexes[i] == meta.sex) out[pos + i] = 1.0;
  pos += schema.sexes.size();
  for (size_t i = 0; i < schema.marital_statuses.size(); ++i)
    if (schema.marital_statuses[i] == meta.marital) out[pos + i] = 1.0;
  pos += schema.marital_statuses.size();
  for (const auto& code : meta.comorbidities) {
    for (size_t i = 0; i < schema.comorbidity_codes.size(); ++i)
      if (schema.comorbidity_codes[i] == code) out[pos + i] = 1.0;  // multi-hot, duplicates idempotent
  }
  return out;
}

}  // namespace sepsis::events
