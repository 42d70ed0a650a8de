#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sepsis::gbt {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool missing_left = true;  // NaN routing learned at fit time
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int internal_node_count() const;
};

struct GbtConfig {
  int max_splits = 6;      // internal nodes per tree
  int n_trees = 1000;
  double shrinkage = 0.1;
  double lambda = 1.0;     // L2 on leaf values
  uint64_t seed = 0;
};

struct GbtModel {
  static constexpr int kSchemaVersion = 1;

  double base_score = 0.0;  // prior log-odds
  double shrinkage = 0.1;
  std::vector<Tree> trees;
  bool single_class_warning = false;
  GbtConfig config;
  std::vector<std::string> feature_names;

  double predict(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static GbtModel from_json(const nlohmann::json& j);
};

// Logistic-loss boosting; trees grown best-first with exact greedy split
// search over sorted unique feature values. Single-class input returns a
// prior-only model with the warning flag set.
GbtModel fit_gbt(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 const GbtConfig& cfg = {});

// Per-round training log loss, recorded for the monotonicity check.
std::vector<double> boosting_loss_trace(const std::vector<std::vector<double>>& features,
                                        const std::vector<int>& labels, const GbtConfig& cfg);

double sigmoid(double z);

// Best (gain, feature, threshold) over an explicit scan; shared by the fit
// path. Gain convention: 0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)).
struct SplitCandidate {
  bool valid = false;
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool missing_left = true;
};

SplitCandidate best_split(const std::vector<std::vector<double>>& features,
                          std::span<const double> grad, std::span<const double> hess,
                          std::span<const size_t> rows, double lambda);

}  // namespace sepsis::gbt
