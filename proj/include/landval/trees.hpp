#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "landval/matrix.hpp"

namespace landval {

enum class EnsembleKind : std::uint8_t { random_forest, extra_trees };

inline std::string_view to_string(EnsembleKind k) {
  return k == EnsembleKind::random_forest ? "random_forest" : "extra_trees";
}

inline EnsembleKind parse_ensemble_kind(std::string_view s) {
  if (s == "random_forest") return EnsembleKind::random_forest;
  if (s == "extra_trees") return EnsembleKind::extra_trees;
  throw ConfigError("unknown ensemble kind '" + std::string(s) + "'");
}

struct TreeConfig {
  int n_trees = 200;
  int max_depth = 12;
  int min_leaf = 5;
  int mtry = 0;  // 0 = ceil(sqrt(n_features))
  std::uint64_t seed = 0;
  int n_threads = 0;  // 0 = hardware concurrency; results do not depend on it

  void validate() const {
    if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
    if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
    if (mtry < 0) throw ConfigError("mtry must be >= 0");
  }
};

/// Binary tree node. Leaves have feature == -1; `value` is the positive-class
/// fraction (classification) or the mean target (regression).
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int n_samples = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  [[nodiscard]] double predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[std::size_t(i)].feature >= 0) {
      const auto& n = nodes[std::size_t(i)];
      i = x[std::size_t(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[std::size_t(i)].value;
  }
};

namespace detail {

inline double gini(double pos, double n) {
  if (n <= 0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

/// Column-major copy for cache-friendly per-feature scans.
struct ColumnStore {
  std::size_t rows, cols;
  std::vector<double> data;
  explicit ColumnStore(const Matrix& X) : rows(X.rows), cols(X.cols), data(X.rows * X.cols) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) data[c * rows + r] = X(r, c);
  }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double weighted_child_impurity = 0.0;
};

class ClassificationTreeBuilder {
 public:
  ClassificationTreeBuilder(const ColumnStore& X, std::span<const int> y, EnsembleKind kind, const TreeConfig& cfg,
                            int mtry, std::uint64_t seed)
      : X_(X), y_(y), kind_(kind), cfg_(cfg), mtry_(mtry), rng_(seed), importance_(X.cols, 0.0) {}

  DecisionTree build() {
    std::vector<std::size_t> idx(X_.rows);
    if (kind_ == EnsembleKind::random_forest) {
      std::uniform_int_distribution<std::size_t> pick(0, X_.rows - 1);
      for (auto& i : idx) i = pick(rng_);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    total_ = double(idx.size());
    DecisionTree tree;
    grow(tree, idx, 0, idx.size(), 0);
    return tree;
  }

  [[nodiscard]] const std::vector<double>& importance() const { return importance_; }

 private:
  int grow(DecisionTree& tree, std::vector<std::size_t>& idx, std::size_t b, std::size_t e, int depth) {
    const int id = int(tree.nodes.size());
    tree.nodes.emplace_back();
    const double n = double(e - b);
    double pos = 0;
    for (auto k = b; k < e; ++k) pos += y_[idx[k]];
    const double impurity = gini(pos, n);
    {
      auto& node = tree.nodes.back();
      node.value = pos / n;
      node.n_samples = int(e - b);
    }
    if (pos == 0 || pos == n) {
      assert(impurity == 0.0);
      return id;
    }
    if (depth >= cfg_.max_depth || e - b < std::size_t(2 * cfg_.min_leaf)) return id;

    auto split = find_split(idx, b, e, pos);
    if (split.feature < 0) return id;

    auto mid = std::partition(idx.begin() + std::ptrdiff_t(b), idx.begin() + std::ptrdiff_t(e), [&](std::size_t r) {
      return X_.at(r, std::size_t(split.feature)) <= split.threshold;
    });
    const auto m = std::size_t(mid - idx.begin());
    assert(m > b && m < e);
    importance_[std::size_t(split.feature)] += n / total_ * (impurity - split.weighted_child_impurity);

    const int left = grow(tree, idx, b, m, depth + 1);
    const int right = grow(tree, idx, m, e, depth + 1);
    auto& node = tree.nodes[std::size_t(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  SplitChoice find_split(const std::vector<std::size_t>& idx, std::size_t b, std::size_t e, double pos) {
    SplitChoice best;
    double best_score = std::numeric_limits<double>::infinity();
    const double n = double(e - b);
    std::vector<std::size_t> features(X_.cols);
    std::iota(features.begin(), features.end(), 0);
    int visited = 0;
    for (std::size_t k = 0; k < features.size() && visited < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features.size() - 1);
      std::swap(features[k], features[pick(rng_)]);
      const auto f = features[k];
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto i = b; i < e; ++i) {
        const double v = X_.at(idx[i], f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;  // constant in this node
      ++visited;
      if (kind_ == EnsembleKind::extra_trees)
        scan_random_threshold(idx, b, e, pos, n, f, lo, hi, best, best_score);
      else
        scan_all_thresholds(idx, b, e, pos, n, f, best, best_score);
    }
    return best;
  }

  void scan_random_threshold(const std::vector<std::size_t>& idx, std::size_t b, std::size_t e, double pos,
                             double n, std::size_t f, double lo, double hi, SplitChoice& best, double& best_score) {
    std::uniform_real_distribution<double> u(lo, hi);
    double thr = u(rng_);
    if (thr >= hi) thr = lo;
    double nl = 0, pl = 0;
    for (auto i = b; i < e; ++i) {
      if (X_.at(idx[i], f) <= thr) {
        nl += 1;
        pl += y_[idx[i]];
      }
    }
    const double nr = n - nl;
    if (nl < cfg_.min_leaf || nr < cfg_.min_leaf) return;
    const double score = (nl * gini(pl, nl) + nr * gini(pos - pl, nr)) / n;
    if (score < best_score) {
      best_score = score;
      best = {int(f), thr, score};
    }
  }

  void scan_all_thresholds(const std::vector<std::size_t>& idx, std::size_t b, std::size_t e, double pos,
                           double n, std::size_t f, SplitChoice& best, double& best_score) {
    buf_.clear();
    for (auto i = b; i < e; ++i) buf_.emplace_back(X_.at(idx[i], f), y_[idx[i]]);
    std::sort(buf_.begin(), buf_.end());
    double pl = 0;
    const std::size_t m = buf_.size();
    const std::size_t min_leaf = std::size_t(cfg_.min_leaf);
    for (std::size_t i = 0; i + 1 < m; ++i) {
      pl += buf_[i].second;
      const std::size_t nl = i + 1;
      if (nl < min_leaf) continue;
      if (m - nl < min_leaf) break;
      if (!(buf_[i].first < buf_[i + 1].first)) continue;
      const double dl = double(nl), dr = double(m - nl);
      const double score = (dl * gini(pl, dl) + dr * gini(pos - pl, dr)) / n;
      if (score < best_score) {
        best_score = score;
        double thr = 0.5 * (buf_[i].first + buf_[i + 1].first);
        if (!(thr < buf_[i + 1].first)) thr = buf_[i].first;
        best = {int(f), thr, score};
      }
    }
  }

  const ColumnStore& X_;
  std::span<const int> y_;
  EnsembleKind kind_;
  const TreeConfig& cfg_;
  int mtry_;
  std::mt19937_64 rng_;
  std::vector<double> importance_;
  std::vector<std::pair<double, int>> buf_;
  double total_ = 0;
};

template <class Fn>
void parallel_for_index(std::size_t n, int n_threads, Fn&& fn) {
  std::size_t workers = n_threads > 0 ? std::size_t(n_threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (auto i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::vector<double> normalized(std::vector<double> v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0)
    for (auto& x : v) x /= s;
  return v;
}

}  // namespace detail

/// Random Forest / Extra Trees classifier with probability leaves.
class TreeEnsemble {
 public:
  TreeEnsemble() = default;
  TreeEnsemble(EnsembleKind kind, std::size_t n_features, std::vector<DecisionTree> trees,
               std::vector<double> importances)
      : kind_(kind), n_features_(n_features), trees_(std::move(trees)), importances_(std::move(importances)) {}

  [[nodiscard]] EnsembleKind kind() const { return kind_; }
  [[nodiscard]] std::size_t n_features() const { return n_features_; }
  [[nodiscard]] const std::vector<DecisionTree>& trees() const { return trees_; }

  /// Normalized mean impurity decrease; unused features score 0.
  [[nodiscard]] const std::vector<double>& importances() const { return importances_; }

  [[nodiscard]] double predict_score(std::span<const double> x) const {
    if (x.size() != n_features_)
      throw ShapeError("predict_score: expected " + std::to_string(n_features_) + " features, got " +
                       std::to_string(x.size()));
    double s = 0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / double(trees_.size());
  }

  [[nodiscard]] std::vector<double> predict_scores(const Matrix& X) const {
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out[r] = predict_score(X.row(r));
    return out;
  }

  [[nodiscard]] nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& j);

 private:
  EnsembleKind kind_ = EnsembleKind::extra_trees;
  std::size_t n_features_ = 0;
  std::vector<DecisionTree> trees_;
  std::vector<double> importances_;
};

inline void check_binary_labels(std::span<const int> y) {
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v == 0) has0 = true;
    else if (v == 1) has1 = true;
    else throw DataError("labels must be 0 or 1");
  }
  if (!has0 || !has1) throw DataError("training labels contain a single class");
}

inline TreeEnsemble fit_ensemble(EnsembleKind kind, const Matrix& X, std::span<const int> y, const TreeConfig& cfg) {
  cfg.validate();
  if (X.rows == 0 || X.cols == 0) throw DataError("fit_ensemble: empty feature matrix");
  if (y.size() != X.rows) throw ShapeError("fit_ensemble: label count does not match rows");
  check_binary_labels(y);
  if (!X.all_finite()) throw DataError("fit_ensemble: feature matrix contains NaN or infinity");

  const int mtry = cfg.mtry > 0 ? std::min<int>(cfg.mtry, int(X.cols))
                                : int(std::ceil(std::sqrt(double(X.cols))));
  const detail::ColumnStore columns(X);
  std::vector<DecisionTree> trees(std::size_t(cfg.n_trees));
  std::vector<std::vector<double>> per_tree(trees.size());
  detail::parallel_for_index(trees.size(), cfg.n_threads, [&](std::size_t t) {
    detail::ClassificationTreeBuilder builder(columns, y, kind, cfg, mtry, mix_seed(cfg.seed, t));
    trees[t] = builder.build();
    per_tree[t] = detail::normalized(builder.importance());
  });
  std::vector<double> imp(X.cols, 0.0);
  for (const auto& v : per_tree)
    for (std::size_t f = 0; f < v.size(); ++f) imp[f] += v[f];
  return TreeEnsemble(kind, X.cols, std::move(trees), detail::normalized(std::move(imp)));
}

// ---------------------------------------------------------------------------
// Gradient-boosted regression baseline
// ---------------------------------------------------------------------------

struct GbtConfig {
  int n_rounds = 300;
  double learning_rate = 0.05;
  int max_depth = 4;
  int min_leaf = 5;

  void validate() const {
    if (n_rounds < 1) throw ConfigError("gbt.n_rounds must be >= 1");
    if (!(learning_rate > 0 && learning_rate <= 1)) throw ConfigError("gbt.learning_rate must lie in (0,1]");
    if (max_depth < 1) throw ConfigError("gbt.max_depth must be >= 1");
    if (min_leaf < 1) throw ConfigError("gbt.min_leaf must be >= 1");
  }
};

namespace detail {

/// Least-squares regression tree over all features, exact split search.
class RegressionTreeBuilder {
 public:
  RegressionTreeBuilder(const ColumnStore& X, std::span<const double> target, const GbtConfig& cfg)
      : X_(X), t_(target), cfg_(cfg) {}

  DecisionTree build() {
    std::vector<std::size_t> idx(X_.rows);
    std::iota(idx.begin(), idx.end(), 0);
    DecisionTree tree;
    grow(tree, idx, 0, idx.size(), 0);
    return tree;
  }

 private:
  int grow(DecisionTree& tree, std::vector<std::size_t>& idx, std::size_t b, std::size_t e, int depth) {
    const int id = int(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0;
    for (auto k = b; k < e; ++k) sum += t_[idx[k]];
    const double n = double(e - b);
    tree.nodes.back().value = sum / n;
    tree.nodes.back().n_samples = int(e - b);
    if (depth >= cfg_.max_depth || e - b < std::size_t(2 * cfg_.min_leaf)) return id;

    int best_f = -1;
    double best_thr = 0, best_gain = 1e-12 * std::max(1.0, std::abs(sum));
    for (std::size_t f = 0; f < X_.cols; ++f) {
      buf_.clear();
      for (auto k = b; k < e; ++k) buf_.emplace_back(X_.at(idx[k], f), t_[idx[k]]);
      std::sort(buf_.begin(), buf_.end());
      double sl = 0;
      const std::size_t m = buf_.size(), ml = std::size_t(cfg_.min_leaf);
      for (std::size_t i = 0; i + 1 < m; ++i) {
        sl += buf_[i].second;
        const std::size_t nl = i + 1;
        if (nl < ml) continue;
        if (m - nl < ml) break;
        if (!(buf_[i].first < buf_[i + 1].first)) continue;
        const double sr = sum - sl;
        // SSE reduction relative to the parent
        const double gain = sl * sl / double(nl) + sr * sr / double(m - nl) - sum * sum / n;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = int(f);
          best_thr = 0.5 * (buf_[i].first + buf_[i + 1].first);
          if (!(best_thr < buf_[i + 1].first)) best_thr = buf_[i].first;
        }
      }
    }
    if (best_f < 0) return id;
    auto mid = std::partition(idx.begin() + std::ptrdiff_t(b), idx.begin() + std::ptrdiff_t(e),
                              [&](std::size_t r) { return X_.at(r, std::size_t(best_f)) <= best_thr; });
    const auto m = std::size_t(mid - idx.begin());
    const int left = grow(tree, idx, b, m, depth + 1);
    const int right = grow(tree, idx, m, e, depth + 1);
    auto& node = tree.nodes[std::size_t(id)];
    node.feature = best_f;
    node.threshold = best_thr;
    node.left = left;
    node.right = right;
    return id;
  }

  const ColumnStore& X_;
  std::span<const double> t_;
  const GbtConfig& cfg_;
  std::vector<std::pair<double, double>> buf_;
};

}  // namespace detail

/// prediction = base + learning_rate * sum of tree outputs.
class GbtRegressor {
 public:
  GbtRegressor() = default;
  GbtRegressor(std::size_t n_features, double base, double learning_rate, std::vector<DecisionTree> trees)
      : n_features_(n_features), base_(base), learning_rate_(learning_rate), trees_(std::move(trees)) {}

  [[nodiscard]] double predict(std::span<const double> x) const {
    if (x.size() != n_features_) throw ShapeError("GbtRegressor::predict: feature width mismatch");
    double s = 0;
    for (const auto& t : trees_) s += t.predict(x);
    return base_ + learning_rate_ * s;
  }

  [[nodiscard]] double base() const { return base_; }
  [[nodiscard]] std::size_t n_rounds() const { return trees_.size(); }
  [[nodiscard]] const std::vector<double>& train_loss() const { return train_loss_; }
  void set_train_loss(std::vector<double> l) { train_loss_ = std::move(l); }

  [[nodiscard]] nlohmann::json to_json() const;
  static GbtRegressor from_json(const nlohmann::json& j);

 private:
  std::size_t n_features_ = 0;
  double base_ = 0;
  double learning_rate_ = 0.1;
  std::vector<DecisionTree> trees_;
  std::vector<double> train_loss_;  // MSE after each round, index 0 = base only
};

inline GbtRegressor fit_gbt_regressor(const Matrix& X, std::span<const double> y, const GbtConfig& cfg) {
  cfg.validate();
  if (X.rows == 0) throw DataError("fit_gbt_regressor: empty data");
  if (y.size() != X.rows) throw ShapeError("fit_gbt_regressor: target count does not match rows");
  const detail::ColumnStore columns(X);
  const double base = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
  std::vector<double> pred(y.size(), base), residual(y.size());
  auto mse = [&] {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
    return s / double(y.size());
  };
  std::vector<double> loss{mse()};
  std::vector<DecisionTree> trees;
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - pred[i];
    detail::RegressionTreeBuilder builder(columns, residual, cfg);
    trees.push_back(builder.build());
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += cfg.learning_rate * trees.back().predict(X.row(i));
    loss.push_back(mse());
  }
  GbtRegressor model(X.cols, base, cfg.learning_rate, std::move(trees));
  model.set_train_loss(std::move(loss));
  return model;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kTreeFormatVersion = 1;

namespace detail {

inline nlohmann::json tree_to_json(const DecisionTree& t) {
  nlohmann::json j;
  std::vector<int> feature, left, right, n;
  std::vector<double> threshold, value;
  for (const auto& node : t.nodes) {
    feature.push_back(node.feature);
    threshold.push_back(node.threshold);
    left.push_back(node.left);
    right.push_back(node.right);
    value.push_back(node.value);
    n.push_back(node.n_samples);
  }
  j["feature"] = feature;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["value"] = value;
  j["n_samples"] = n;
  return j;
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto n = j.at("n_samples").get<std::vector<int>>();
  const auto size = feature.size();
  if (threshold.size() != size || left.size() != size || right.size() != size || value.size() != size ||
      n.size() != size || size == 0)
    throw DataError("tree node arrays have inconsistent lengths");
  DecisionTree t;
  for (std::size_t i = 0; i < size; ++i) {
    if (feature[i] >= 0 && (left[i] <= int(i) || right[i] <= int(i) || left[i] >= int(size) || right[i] >= int(size)))
      throw DataError("tree node " + std::to_string(i) + " has invalid children");
    t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], n[i]});
  }
  return t;
}

inline void check_header(const nlohmann::json& j, std::string_view format) {
  if (j.value("format", "") != format) throw DataError("expected a '" + std::string(format) + "' document");
  if (j.value("version", 0) != kTreeFormatVersion)
    throw DataError("unsupported " + std::string(format) + " version " + std::to_string(j.value("version", 0)));
}

}  // namespace detail

inline nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json j;
  j["format"] = "landval.tree_ensemble";
  j["version"] = kTreeFormatVersion;
  j["kind"] = std::string(to_string(kind_));
  j["n_features"] = n_features_;
  j["importances"] = importances_;
  j["trees"] = nlohmann::json::array();
  for (const auto& t : trees_) j["trees"].push_back(detail::tree_to_json(t));
  return j;
}

inline TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& j) {
  detail::check_header(j, "landval.tree_ensemble");
  std::vector<DecisionTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(detail::tree_from_json(t));
  if (trees.empty()) throw DataError("tree ensemble has no trees");
  const auto n_features = j.at("n_features").get<std::size_t>();
  auto imp = j.at("importances").get<std::vector<double>>();
  if (imp.size() != n_features) throw DataError("importance vector width mismatch");
  for (const auto& t : trees)
    for (const auto& node : t.nodes)
      if (node.feature >= int(n_features)) throw DataError("tree splits on an out-of-range feature");
  return TreeEnsemble(parse_ensemble_kind(j.at("kind").get<std::string>()), n_features, std::move(trees),
                      std::move(imp));
}

inline nlohmann::json GbtRegressor::to_json() const {
  nlohmann::json j;
  j["format"] = "landval.gbt_regressor";
  j["version"] = kTreeFormatVersion;
  j["n_features"] = n_features_;
  j["base"] = base_;
  j["learning_rate"] = learning_rate_;
  j["train_loss"] = train_loss_;
  j["trees"] = nlohmann::json::array();
  for (const auto& t : trees_) j["trees"].push_back(detail::tree_to_json(t));
  return j;
}

inline GbtRegressor GbtRegressor::from_json(const nlohmann::json& j) {
  detail::check_header(j, "landval.gbt_regressor");
  std::vector<DecisionTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(detail::tree_from_json(t));
  GbtRegressor m(j.at("n_features").get<std::size_t>(), j.at("base").get<double>(),
                 j.at("learning_rate").get<double>(), std::move(trees));
  m.set_train_loss(j.value("train_loss", std::vector<double>{}));
  return m;
}

}  // namespace landval
