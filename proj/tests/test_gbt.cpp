#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "sepsis/eval.hpp"
#include "sepsis/gbt.hpp"
#include "sepsis/util.hpp"

using namespace sepsis;
using namespace sepsis::gbt;

namespace {

// exhaustive (feature, boundary, missing-side) scan, independent of the
// search in best_split
double brute_force_best_gain(const std::vector<std::vector<double>>& x,
                             const std::vector<double>& g, const std::vector<double>& h,
                             double lambda) {
  auto obj = [&](double gs, double hs) { return 0.5 * gs * gs / (hs + lambda); };
  const size_t n = x.size();
  const size_t d = x.front().size();
  double g_all = 0, h_all = 0;
  for (size_t i = 0; i < n; ++i) {
    g_all += g[i];
    h_all += h[i];
  }
  double best = -1e300;
  for (size_t f = 0; f < d; ++f) {
    std::vector<double> values;
    for (size_t i = 0; i < n; ++i)
      if (!std::isnan(x[i][f])) values.push_back(x[i][f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (size_t k = 0; k + 1 < values.size(); ++k) {
      const double thr = values[k] + 0.5 * (values[k + 1] - values[k]);
      for (int miss_left = 0; miss_left < 2; ++miss_left) {
        double gl = 0, hl = 0;
        for (size_t i = 0; i < n; ++i) {
          const bool left = std::isnan(x[i][f]) ? miss_left != 0 : x[i][f] < thr;
          if (left) {
            gl += g[i];
            hl += h[i];
          }
        }
        best = std::max(best, obj(gl, hl) + obj(g_all - gl, h_all - hl) - obj(g_all, h_all));
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("a perfectly separating feature yields training AUROC 1 after one tree") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back({static_cast<double>(i)});
    y.push_back(i >= 20 ? 1 : 0);
  }
  GbtConfig cfg;
  cfg.n_trees = 1;
  GbtModel m = fit_gbt(x, y, cfg);
  REQUIRE(m.trees.size() == 1);
  std::vector<double> scores;
  for (const auto& xi : x) scores.push_back(m.predict(xi));
  CHECK(eval::auroc(scores, y) == 1.0);
}

TEST_CASE("single-class input returns the prior with a warning") {
  std::vector<std::vector<double>> x = {{1.0}, {2.0}, {3.0}};
  std::vector<int> y = {0, 0, 0};
  GbtModel m = fit_gbt(x, y);
  CHECK(m.single_class_warning);
  CHECK(m.trees.empty());
  for (const auto& xi : x) {
    CHECK(m.predict(xi) == doctest::Approx(sigmoid(m.base_score)));
    CHECK(m.predict(xi) < 1e-3);  // base rate of an all-negative set
  }
}

TEST_CASE("XOR needs more than one split") {
  std::vector<std::vector<double>> x = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  std::vector<int> y = {0, 1, 1, 0};

  // enumerate all single-split trees: none separates XOR
  for (int f = 0; f < 2; ++f) {
    // the only distinct threshold is 0.5
    for (int side = 0; side < 2; ++side) {
      int left_pos = 0, left_n = 0, right_pos = 0, right_n = 0;
      for (size_t i = 0; i < 4; ++i) {
        const bool left = x[i][static_cast<size_t>(f)] < 0.5;
        if (left) {
          left_pos += y[i];
          ++left_n;
        } else {
          right_pos += y[i];
          ++right_n;
        }
      }
      // each side stays at 50/50: no single split can tell the classes apart
      CHECK(left_pos * 2 == left_n);
      CHECK(right_pos * 2 == right_n);
    }
  }

  GbtConfig one;
  one.n_trees = 1;
  one.max_splits = 1;
  GbtModel weak = fit_gbt(x, y, one);
  int correct_weak = 0;
  for (size_t i = 0; i < 4; ++i)
    correct_weak += (weak.predict(x[i]) > 0.5 ? 1 : 0) == y[i] ? 1 : 0;
  CHECK(correct_weak <= 2);  // no better than chance

  GbtConfig full;
  full.n_trees = 50;
  GbtModel strong = fit_gbt(x, y, full);
  for (size_t i = 0; i < 4; ++i) CHECK((strong.predict(x[i]) > 0.5 ? 1 : 0) == y[i]);
}

TEST_CASE("prediction mechanics") {
  GbtModel m;
  m.base_score = 0.3;
  m.shrinkage = 0.1;
  // empty tree list: the prior
  CHECK(m.predict(std::vector<double>{1.0}) == doctest::Approx(sigmoid(0.3)));

  // an all-zero-leaf tree changes nothing
  Tree zero;
  zero.nodes.push_back(TreeNode{});
  m.trees.push_back(zero);
  CHECK(m.predict(std::vector<double>{1.0}) == doctest::Approx(sigmoid(0.3)));

  // raising a leaf on the sample's path raises the risk
  Tree t;
  TreeNode root;
  root.feature = 0;
  root.threshold = 0.5;
  root.left = 1;
  root.right = 2;
  t.nodes = {root, TreeNode{}, TreeNode{}};
  t.nodes[2].leaf_value = 1.0;
  m.trees.push_back(t);
  const double before = m.predict(std::vector<double>{1.0});
  m.trees.back().nodes[2].leaf_value = 2.0;
  CHECK(m.predict(std::vector<double>{1.0}) > before);

  // NaN routes along the learned default direction
  t.nodes[0].missing_left = false;
  t.nodes[2].leaf_value = 5.0;
  GbtModel nan_model;
  nan_model.base_score = 0.0;
  nan_model.shrinkage = 1.0;
  nan_model.trees.push_back(t);
  const double nan_risk =
      nan_model.predict(std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
  CHECK(nan_risk == doctest::Approx(sigmoid(5.0)));

  // feature count mismatch is an error
  m.feature_names = {"a", "b"};
  CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), std::runtime_error);
}

TEST_CASE("trees never exceed the split budget and loss never rises") {
  Rng rng(31);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 150; ++i) {
    std::vector<double> row = {rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
    const double score = 1.4 * row[0] - 0.9 * row[1] + 0.4 * rng.normal(0, 1);
    x.push_back(std::move(row));
    y.push_back(score > 0 ? 1 : 0);
  }
  GbtConfig cfg;
  cfg.n_trees = 60;
  GbtModel m = fit_gbt(x, y, cfg);
  for (const auto& t : m.trees) CHECK(t.internal_node_count() <= cfg.max_splits);

  auto trace = boosting_loss_trace(x, y, cfg);
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("same data and seed give an identical serialized model") {
  Rng rng(99);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 80; ++i) {
    x.push_back({rng.normal(0, 1), rng.normal(0, 1)});
    y.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  GbtConfig cfg;
  cfg.n_trees = 25;
  cfg.seed = 5;
  CHECK(fit_gbt(x, y, cfg).to_json().dump() == fit_gbt(x, y, cfg).to_json().dump());
}

TEST_CASE("greedy split matches the brute-force maximum gain") {
  Rng rng(47);
  for (int inst = 0; inst < 100; ++inst) {
    const size_t n = static_cast<size_t>(rng.uniform_int(5, 50));
    const size_t d = static_cast<size_t>(rng.uniform_int(1, 4));
    std::vector<std::vector<double>> x(n);
    std::vector<double> g(n), h(n);
    std::vector<size_t> rows(n);
    for (size_t i = 0; i < n; ++i) {
      for (size_t f = 0; f < d; ++f) {
        // quantized values force ties; the odd NaN exercises missing routing
        const double v = rng.bernoulli(0.1) ? std::numeric_limits<double>::quiet_NaN()
                                            : std::round(rng.uniform(-3, 3) * 4) / 4.0;
        x[i].push_back(v);
      }
      g[i] = rng.normal(0, 1);
      h[i] = rng.uniform(0.05, 1.0);
      rows[i] = i;
    }
    SplitCandidate c = best_split(x, g, h, rows, 1.0);
    const double bf = brute_force_best_gain(x, g, h, 1.0);
    if (!c.valid) {
      CHECK(bf <= 0.0 + 1e-12);
    } else {
      CHECK(c.gain == doctest::Approx(bf).epsilon(1e-9));
    }
  }
}

TEST_CASE("json round trip preserves predictions") {
  Rng rng(7);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    x.push_back({rng.normal(0, 1), rng.normal(0, 1)});
    y.push_back(x.back()[0] > 0.2 ? 1 : 0);
  }
  GbtConfig cfg;
  cfg.n_trees = 10;
  GbtModel m = fit_gbt(x, y, cfg);
  GbtModel back = GbtModel::from_json(m.to_json());
  for (const auto& xi : x) CHECK(back.predict(xi) == m.predict(xi));
}
