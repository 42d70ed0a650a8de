#include "sepsis/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sepsis::gbt {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double Tree::predict(std::span<const double> x) const {
  if (nodes.empty()) return 0.0;
  int i = 0;
  while (!nodes[static_cast<size_t>(i)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<size_t>(i)];
    const double v = x[static_cast<size_t>(n.feature)];
    if (std::isnan(v)) {
      i = n.missing_left ? n.left : n.right;
    } else {
      i = v < n.threshold ? n.left : n.right;
    }
  }
  return nodes[static_cast<size_t>(i)].leaf_value;
}

int Tree::internal_node_count() const {
  int n = 0;
  for (const auto& node : nodes)
    if (!node.is_leaf()) ++n;
  return n;
}

double GbtModel::predict(std::span<const double> x) const {
  if (!feature_names.empty() && x.size() != feature_names.size())
    throw std::runtime_error("feature count mismatch: expected " +
                             std::to_string(feature_names.size()) + ", got " +
                             std::to_string(x.size()));
  double score = base_score;
  for (const auto& t : trees) score += shrinkage * t.predict(x);
  return sigmoid(score);
}

namespace {

double leaf_objective(double g, double h, double lambda) {
  return 0.5 * g * g / (h + lambda);
}

struct SideSums {
  double g = 0.0, h = 0.0;
};

}  // namespace

SplitCandidate best_split(const std::vector<std::vector<double>>& features,
                          std::span<const double> grad, std::span<const double> hess,
                          std::span<const size_t> rows, double lambda) {
  SplitCandidate best;
  if (rows.size() < 2) return best;
  const size_t n_features = features.front().size();

  double g_total = 0.0, h_total = 0.0;
  for (size_t r : rows) {
    g_total += grad[r];
    h_total += hess[r];
  }
  const double parent_obj = leaf_objective(g_total, h_total, lambda);

  std::vector<std::pair<double, size_t>> sorted;
  for (size_t f = 0; f < n_features; ++f) {
    sorted.clear();
    SideSums missing;
    for (size_t r : rows) {
      const double v = features[r][f];
      if (std::isnan(v)) {
        missing.g += grad[r];
        missing.h += hess[r];
      } else {
        sorted.emplace_back(v, r);
      }
    }
    if (sorted.size() < 2) continue;
    std::sort(sorted.begin(), sorted.end());

    SideSums left;
    for (size_t i = 0; i + 1 < sorted.size(); ++i) {
      left.g += grad[sorted[i].second];
      left.h += hess[sorted[i].second];
      if (sorted[i].first == sorted[i + 1].first) continue;  // split only between distinct values
      const double threshold = sorted[i].first + 0.5 * (sorted[i + 1].first - sorted[i].first);
      // try missing on either side; strict > keeps the first candidate on
      // ties, so the scan order (feature, threshold, missing-left-first) is
      // the deterministic tie break
      for (int miss_left = 1; miss_left >= 0; --miss_left) {
        double gl = left.g + (miss_left ? missing.g : 0.0);
        double hl = left.h + (miss_left ? missing.h : 0.0);
        double gr = g_total - gl;
        double hr = h_total - hl;
        const double gain =
            leaf_objective(gl, hl, lambda) + leaf_objective(gr, hr, lambda) - parent_obj;
        if (!best.valid || gain > best.gain) {
          best.valid = true;
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = threshold;
          best.missing_left = miss_left != 0;
        }
      }
    }
  }
  return best;
}

namespace {

struct LeafWork {
  int node = 0;
  std::vector<size_t> rows;
  SplitCandidate split;
};

Tree grow_tree(const std::vector<std::vector<double>>& features, std::span<const double> grad,
               std::span<const double> hess, std::span<const size_t> all_rows,
               const GbtConfig& cfg) {
  Tree tree;
  tree.nodes.push_back(TreeNode{});

  auto leaf_value = [&](const std::vector<size_t>& rows) {
    double g = 0.0, h = 0.0;
    for (size_t r : rows) {
      g += grad[r];
      h += hess[r];
    }
    return -g / (h + cfg.lambda);
  };

  std::vector<LeafWork> open;
  {
    LeafWork root;
    root.node = 0;
    root.rows.assign(all_rows.begin(), all_rows.end());
    root.split = best_split(features, grad, hess, root.rows, cfg.lambda);
    tree.nodes[0].leaf_value = leaf_value(root.rows);
    open.push_back(std::move(root));
  }

  int splits_done = 0;
  while (splits_done < cfg.max_splits) {
    // best-first: expand the open leaf with the highest gain. Zero-gain
    // splits may proceed (an XOR-style root split gains nothing by itself
    // yet unlocks the children); only negative gain stops growth.
    int best_i = -1;
    for (size_t i = 0; i < open.size(); ++i) {
      if (!open[i].split.valid || open[i].split.gain < 0.0) continue;
      if (best_i < 0 || open[i].split.gain > open[static_cast<size_t>(best_i)].split.gain)
        best_i = static_cast<int>(i);
    }
    if (best_i < 0) break;

    LeafWork work = std::move(open[static_cast<size_t>(best_i)]);
    open.erase(open.begin() + best_i);

    LeafWork lw, rw;
    for (size_t r : work.rows) {
      const double v = features[r][static_cast<size_t>(work.split.feature)];
      const bool go_left =
          std::isnan(v) ? work.split.missing_left : v < work.split.threshold;
      (go_left ? lw.rows : rw.rows).push_back(r);
    }
    if (lw.rows.empty() || rw.rows.empty()) continue;  // degenerate, drop candidate

    TreeNode& parent = tree.nodes[static_cast<size_t>(work.node)];
    parent.feature = work.split.feature;
    parent.threshold = work.split.threshold;
    parent.missing_left = work.split.missing_left;
    parent.leaf_value = 0.0;
    parent.left = static_cast<int>(tree.nodes.size());
    parent.right = parent.left + 1;

    lw.node = parent.left;
    rw.node = parent.right;
    tree.nodes.push_back(TreeNode{});
    tree.nodes.push_back(TreeNode{});
    tree.nodes[static_cast<size_t>(lw.node)].leaf_value = leaf_value(lw.rows);
    tree.nodes[static_cast<size_t>(rw.node)].leaf_value = leaf_value(rw.rows);
    ++splits_done;

    if (splits_done < cfg.max_splits) {
      lw.split = best_split(features, grad, hess, lw.rows, cfg.lambda);
      rw.split = best_split(features, grad, hess, rw.rows, cfg.lambda);
    }
    open.push_back(std::move(lw));
    open.push_back(std::move(rw));
  }
  return tree;
}

double clamp_prob(double p) { return std::min(1.0 - 1e-6, std::max(1e-6, p)); }

}  // namespace

GbtModel fit_gbt(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 const GbtConfig& cfg) {
  if (features.size() != labels.size() || features.size() < 2)
    throw std::runtime_error("fit_gbt needs at least two labeled samples");
  const size_t n = features.size();

  GbtModel model;
  model.config = cfg;
  model.shrinkage = cfg.shrinkage;

  int64_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  const double prior = clamp_prob(static_cast<double>(n_pos) / static_cast<double>(n));
  model.base_score = std::log(prior / (1.0 - prior));
  if (n_pos == 0 || n_pos == static_cast<int64_t>(n)) {
    model.single_class_warning = true;
    return model;  // prior-only
  }

  std::vector<double> score(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<size_t> all_rows(n);
  for (size_t i = 0; i < n; ++i) all_rows[i] = i;

  for (int round = 0; round < cfg.n_trees; ++round) {
    for (size_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      grad[i] = p - static_cast<double>(labels[i]);
      hess[i] = std::max(p * (1.0 - p), 1e-12);
    }
    Tree tree = grow_tree(features, grad, hess, all_rows, cfg);
    if (tree.internal_node_count() == 0) break;  // no further gain anywhere
    for (size_t i = 0; i < n; ++i) score[i] += cfg.shrinkage * tree.predict(features[i]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> boosting_loss_trace(const std::vector<std::vector<double>>& features,
                                        const std::vector<int>& labels, const GbtConfig& cfg) {
  GbtModel model = fit_gbt(features, labels, cfg);
  const size_t n = features.size();
  std::vector<double> score(n, model.base_score);
  auto log_loss = [&]() {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double p = clamp_prob(sigmoid(score[i]));
      total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(n);
  };
  std::vector<double> trace;
  trace.push_back(log_loss());
  for (const auto& tree : model.trees) {
    for (size_t i = 0; i < n; ++i) score[i] += model.shrinkage * tree.predict(features[i]);
    trace.push_back(log_loss());
  }
  return trace;
}

namespace {

nlohmann::json node_to_json(const Tree& tree, int idx) {
  const TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
  if (n.is_leaf()) return nlohmann::json{{"value", n.leaf_value}};
  return nlohmann::json{{"feature", n.feature},
                        {"threshold", n.threshold},
                        {"missing_left", n.missing_left},
                        {"left", node_to_json(tree, n.left)},
                        {"right", node_to_json(tree, n.right)}};
}

int node_from_json(const nlohmann::json& j, Tree& tree) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  if (j.contains("value")) {
    tree.nodes[static_cast<size_t>(idx)].leaf_value = j.at("value").get<double>();
    return idx;
  }
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.missing_left = j.at("missing_left").get<bool>();
  tree.nodes[static_cast<size_t>(idx)] = n;
  const int left = node_from_json(j.at("left"), tree);
  const int right = node_from_json(j.at("right"), tree);
  tree.nodes[static_cast<size_t>(idx)].left = left;
  tree.nodes[static_cast<size_t>(idx)].right = right;
  return idx;
}

}  // namespace

nlohmann::json GbtModel::to_json() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const auto& t : trees) trees_json.push_back(node_to_json(t, 0));
  return nlohmann::json{{"model_format_version", kSchemaVersion},
                        {"kind", "gbt"},
                        {"base_score", base_score},
                        {"shrinkage", shrinkage},
                        {"single_class_warning", single_class_warning},
                        {"config",
                         {{"max_splits", config.max_splits},
                          {"n_trees", config.n_trees},
                          {"shrinkage", config.shrinkage},
                          {"lambda", config.lambda},
                          {"seed", config.seed}}},
                        {"feature_names", feature_names},
                        {"trees", trees_json}};
}

GbtModel GbtModel::from_json(const nlohmann::json& j) {
  if (j.at("model_format_version").get<int>() != kSchemaVersion)
    throw std::runtime_error("gbt model format version mismatch");
  GbtModel m;
  m.base_score = j.at("base_score").get<double>();
  m.shrinkage = j.at("shrinkage").get<double>();
  m.single_class_warning = j.value("single_class_warning", false);
  const auto& c = j.at("config");
  m.config.max_splits = c.at("max_splits").get<int>();
  m.config.n_trees = c.at("n_trees").get<int>();
  m.config.shrinkage = c.at("shrinkage").get<double>();
  m.config.lambda = c.at("lambda").get<double>();
  m.config.seed = c.at("seed").get<uint64_t>();
  m.feature_names = j.value("feature_names", std::vector<std::string>{});
  for (const auto& tj : j.at("trees")) {
    Tree t;
    node_from_json(tj, t);
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace sepsis::gbt
