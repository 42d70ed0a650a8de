#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sepsis/events.hpp"
#include "sepsis/util.hpp"

using namespace sepsis;
using namespace sepsis::events;

namespace {

Event num_event(int64_t t, const std::string& cat, std::vector<double> vals) {
  Event e;
  e.time = t;
  e.category = cat;
  e.values = std::move(vals);
  return e;
}

Event code_event(int64_t t, const std::string& cat, const std::string& code) {
  Event e;
  e.time = t;
  e.category = cat;
  e.code = code;
  return e;
}

CategoryCatalog test_catalog() {
  CategoryCatalog cat;
  EventCategory bp{"bp", Kind::Numeric, 2, {}};
  EventCategory hr{"hr", Kind::Numeric, 1, {}};
  EventCategory proc{"proc", Kind::Categorical, 1, {}};
  EventCategory diag{"diag", Kind::Hierarchical, 1, {1, 3, 5}};
  cat.add(bp);
  cat.add(hr);
  cat.add(proc);
  cat.add(diag);
  return cat;
}

EventSequence seq_of(std::vector<Event> evs) {
  EventSequence s;
  s.events = std::move(evs);
  s.sort_by_time();
  return s;
}

}  // namespace

TEST_CASE("vocabulary retains entries at the support boundary") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  // "common" in 100 sequences, "rare" in 99
  for (int i = 0; i < 100; ++i) {
    EventSequence s;
    s.events.push_back(code_event(0, "proc", "common"));
    if (i < 99) s.events.push_back(code_event(1, "proc", "rare"));
    seqs.push_back(std::move(s));
  }
  Vocabulary v = build_vocabulary(seqs, cat, 100);
  CHECK(v.index_of("proc", "common").has_value());
  CHECK_FALSE(v.index_of("proc", "rare").has_value());
}

TEST_CASE("constant numeric entry gets a zero stddev and vectorizes to zero") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(seq_of({num_event(0, "hr", {7.0})}));
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  const int idx = *v.index_of("hr", "000");
  CHECK(v.entry(idx)->mean == doctest::Approx(7.0));
  CHECK(v.entry(idx)->stddev == doctest::Approx(0.0));
  SparseVector sv = vectorize_event(num_event(0, "hr", {7.0}), v);
  CHECK(sv.at(idx) == 0.0);
}

TEST_CASE("empty corpus is an error") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  CHECK_THROWS_WITH_AS(build_vocabulary(seqs, cat, 1), "empty training corpus",
                       std::runtime_error);
}

TEST_CASE("blood pressure event vectorizes to exactly two nonzero entries") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {
      seq_of({num_event(0, "bp", {120, 80})}),
      seq_of({num_event(0, "bp", {130, 85})}),
  };
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  SparseVector sv = vectorize_event(num_event(0, "bp", {118, 79}), v);
  CHECK(sv.nonzero_count() == 2);
}

TEST_CASE("categorical event is one-hot") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {seq_of({code_event(0, "proc", "x")})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  SparseVector sv = vectorize_event(code_event(5, "proc", "x"), v);
  REQUIRE(sv.nonzero_count() == 1);
  CHECK(sv.items[0].second == 1.0);
}

TEST_CASE("hierarchical code lights one entry per present level") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {seq_of({code_event(0, "diag", "DA419")})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  // prefix lengths 1, 3, 5 -> "D", "DA4", "DA419"
  SparseVector sv = vectorize_event(code_event(9, "diag", "DA419"), v);
  CHECK(sv.nonzero_count() == 3);
  for (const auto& [idx, val] : sv.items) CHECK(val == 1.0);
}

TEST_CASE("numeric arity mismatch is an error") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {seq_of({num_event(0, "bp", {120, 80})})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  CHECK_THROWS_AS(vectorize_event(num_event(0, "bp", {120}), v), std::runtime_error);
}

TEST_CASE("out-of-vocabulary values are dropped silently") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {seq_of({code_event(0, "proc", "x")})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  CHECK(vectorize_event(code_event(0, "proc", "never_seen"), v).nonzero_count() == 0);
  // unknown category entirely
  Event other = code_event(0, "unknown_cat", "z");
  CHECK(vectorize_event(other, v).nonzero_count() == 0);
}

TEST_CASE("interval aggregation counts codes and summarizes numerics") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {
      seq_of({code_event(0, "proc", "p1"), num_event(0, "hr", {100})}),
      seq_of({num_event(0, "hr", {50})}),
  };
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  const auto* hr = v.entry(*v.index_of("hr", "000"));

  // two identical procedure events -> count 2
  std::vector<Event> evs = {code_event(10, "proc", "p1"), code_event(11, "proc", "p1"),
                            num_event(10, "hr", {120}), num_event(12, "hr", {130})};
  SparseVector agg = aggregate_interval(evs, v);
  const int proc_col = v.aggregated_offset(*v.index_of("proc", "p1"));
  CHECK(agg.at(proc_col) == 2.0);

  // numeric min/max/mean on the normalized scale: affine image of 120/130/125
  const int hr_col = v.aggregated_offset(*v.index_of("hr", "000"));
  auto norm = [&](double x) { return (x - hr->mean) / hr->stddev; };
  CHECK(agg.at(hr_col + 0) == doctest::Approx(norm(120)));
  CHECK(agg.at(hr_col + 1) == doctest::Approx(norm(130)));
  CHECK(agg.at(hr_col + 2) == doctest::Approx(norm(125)));
  CHECK(agg.at(v.presence_flag_column()) == 1.0);
}

TEST_CASE("empty interval aggregates to zero with an absent flag") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {seq_of({code_event(0, "proc", "p1")})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  SparseVector agg = aggregate_interval(std::span<const Event>{}, v);
  CHECK(agg.nonzero_count() == 0);
  CHECK(agg.at(v.presence_flag_column()) == 0.0);
}

TEST_CASE("sparsity bound: nonzeros never exceed max(arity, hierarchy depth)") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    EventSequence s;
    s.events.push_back(num_event(0, "bp", {rng.uniform(90, 180), rng.uniform(50, 110)}));
    s.events.push_back(num_event(1, "hr", {rng.uniform(40, 160)}));
    s.events.push_back(code_event(2, "proc", rng.bernoulli(0.5) ? "a" : "b"));
    s.events.push_back(code_event(3, "diag", rng.bernoulli(0.5) ? "DA419" : "DJ150"));
    seqs.push_back(std::move(s));
  }
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  for (const auto& s : seqs) {
    for (const auto& ev : s.events) {
      const EventCategory& c = cat.require(ev.category);
      const int bound = std::max(c.arity, c.level_count());
      CHECK(vectorize_event(ev, v).nonzero_count() <= bound);
    }
  }
}

TEST_CASE("normalized training entries have mean 0 and stddev 1") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  Rng rng(11);
  for (int i = 0; i < 200; ++i)
    seqs.push_back(seq_of({num_event(0, "hr", {rng.normal(80, 13)})}));
  Vocabulary v = build_vocabulary(seqs, cat, 1);
  const int idx = *v.index_of("hr", "000");

  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  for (const auto& s : seqs) {
    for (const auto& ev : s.events) {
      const double z = vectorize_event(ev, v).at(idx);
      sum += z;
      sq += z * z;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
}

TEST_CASE("aggregation counts are additive over disjoint event sets") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs = {
      seq_of({code_event(0, "proc", "a"), code_event(0, "proc", "b"),
              code_event(0, "diag", "DA419")})};
  Vocabulary v = build_vocabulary(seqs, cat, 1);

  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Event> a, b, both;
    for (int i = 0; i < 12; ++i) {
      Event e = rng.bernoulli(0.5) ? code_event(i, "proc", rng.bernoulli(0.5) ? "a" : "b")
                                   : code_event(i, "diag", "DA419");
      (rng.bernoulli(0.5) ? a : b).push_back(e);
      both.push_back(e);
    }
    SparseVector va = aggregate_interval(a, v);
    SparseVector vb = aggregate_interval(b, v);
    SparseVector vab = aggregate_interval(both, v);
    for (int i = 0; i < v.size(); ++i) {
      if (v.entry(i)->kind == Kind::Numeric) continue;
      const int col = v.aggregated_offset(i);
      CHECK(vab.at(col) == doctest::Approx(va.at(col) + vb.at(col)));
    }
  }
}

TEST_CASE("vocabulary construction is reproducible") {
  CategoryCatalog cat = test_catalog();
  std::vector<EventSequence> seqs;
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    EventSequence s;
    s.events.push_back(num_event(0, "hr", {rng.uniform(40, 160)}));
    s.events.push_back(code_event(1, "proc", rng.bernoulli(0.3) ? "a" : "b"));
    seqs.push_back(std::move(s));
  }
  Vocabulary v1 = build_vocabulary(seqs, cat, 2);
  Vocabulary v2 = build_vocabulary(seqs, cat, 2);
  REQUIRE(v1.size() == v2.size());
  for (int i = 0; i < v1.size(); ++i) {
    CHECK(v1.entry(i)->category == v2.entry(i)->category);
    CHECK(v1.entry(i)->item == v2.entry(i)->item);
    CHECK(v1.entry(i)->support == v2.entry(i)->support);
  }
}

TEST_CASE("context vector layout and determinism") {
  ContextSchema schema;
  REQUIRE(schema.size() == 26);

  ContextMeta meta;
  meta.age_years = 50.0;
  meta.sex = "male";
  meta.marital = "married";
  std::vector<double> v = vectorize_context(meta, schema);
  REQUIRE(static_cast<int>(v.size()) == 26);
  int nonzero = 0;
  for (double x : v) nonzero += x != 0.0 ? 1 : 0;
  CHECK(nonzero == 3);  // age, sex, marital

  // determinism
  CHECK(vectorize_context(meta, schema) == v);

  // duplicate comorbidities collapse
  ContextMeta dup = meta;
  dup.comorbidities = {"I10", "I10"};
  ContextMeta single = meta;
  single.comorbidities = {"I10"};
  CHECK(vectorize_context(dup, schema) == vectorize_context(single, schema));

  // unknown comorbidity codes ignored
  ContextMeta unknown = meta;
  unknown.comorbidities = {"ZZZ"};
  CHECK(vectorize_context(unknown, schema) == v);

  // missing age is an error
  ContextMeta no_age;
  no_age.sex = "male";
  CHECK_THROWS_AS(vectorize_context(no_age, schema), std::runtime_error);
}
