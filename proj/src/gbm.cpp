#include "biofuse/gbm.hpp"

#include <algorithm>
#include <numeric>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Tensor& x, std::span<const double> r, std::size_t max_depth, std::size_t min_leaf)
      : x_(x), r_(r), max_depth_(max_depth), min_leaf_(std::max<std::size_t>(1, min_leaf)) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> all(r_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(all, 0);
    return std::move(nodes_);
  }

 private:
  double feature(std::size_t row, std::size_t col) const { return x_.at(row, col); }

  std::int32_t grow(const std::vector<std::size_t>& rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    for (std::size_t i : rows) sum += r_[i];
    nodes_[id].value = sum / static_cast<double>(rows.size());

    const bool constant = std::all_of(rows.begin(), rows.end(), [&](std::size_t i) { return r_[i] == r_[rows[0]]; });
    if (depth >= max_depth_ || rows.size() < 2 * min_leaf_ || constant) return id;

    const Split split = best_split(rows, sum);
    if (!split.found) return id;
    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (feature(i, split.feature) <= split.threshold ? left : right).push_back(i);

    nodes_[id].feature = static_cast<std::int32_t>(split.feature);
    nodes_[id].threshold = split.threshold;
    const std::int32_t l = grow(left, depth + 1);
    const std::int32_t r = grow(right, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, double sum) const {
    const std::size_t n = rows.size();
    const double parent = sum * sum / static_cast<double>(n);

    Split best;
    std::vector<std::size_t> sorted = rows;
    for (std::size_t f = 0; f < x_.dim(1); ++f) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return feature(a, f) < feature(b, f); });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += r_[sorted[i]];
        const double lo = feature(sorted[i], f), hi = feature(sorted[i + 1], f);
        const std::size_t nl = i + 1, nr = n - nl;
        if (lo == hi || nl < min_leaf_ || nr < min_leaf_) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent;
        // A zero-gain split is still taken when nothing better exists, so
        // interactions such as XOR remain reachable at the next level.
        if (!best.found || gain > best.gain) {
          double mid = lo + 0.5 * (hi - lo);
          if (mid >= hi) mid = lo;
          best = {true, f, mid, gain};
        }
      }
    }
    return best;
  }

  const Tensor& x_;
  std::span<const double> r_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
  std::vector<TreeNode> nodes_;
};

double mse(std::span<const double> y, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
  return s / static_cast<double>(y.size());
}

}  // namespace

std::size_t RegressionTree::leaf_index(std::span<const double> x) const {
  if (nodes_.empty()) throw ContractError("regression tree has no nodes");
  std::size_t id = 0;
  while (nodes_[id].feature >= 0) {
    const auto& node = nodes_[id];
    if (static_cast<std::size_t>(node.feature) >= x.size())
      throw DimensionError("tree splits on feature " + std::to_string(node.feature) + " but input has " +
                           std::to_string(x.size()));
    id = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return id;
}

double RegressionTree::predict(std::span<const double> x) const { return nodes_[leaf_index(x)].value; }

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

RegressionTree fit_tree(const Tensor& features, std::span<const double> residuals, std::size_t max_depth,
                        std::size_t min_leaf) {
  if (features.rank() != 2 || features.dim(0) != residuals.size())
    throw DimensionError("fit_tree: features " + shape_to_string(features.shape()) + " do not match " +
                         std::to_string(residuals.size()) + " residuals");
  if (residuals.empty()) throw ArgumentError("fit_tree: no training points");
  return RegressionTree(TreeBuilder(features, residuals, max_depth, min_leaf).build());
}

GbmModel gbm_fit(const Tensor& features, std::span<const double> targets, const GbmConfig& config,
                 std::vector<double>* mse_trace) {
  if (features.rank() != 2 || features.dim(0) != targets.size())
    throw DimensionError("gbm_fit: features " + shape_to_string(features.shape()) + " do not match " +
                         std::to_string(targets.size()) + " targets");
  if (targets.size() < 2) throw ConfigError("gbm_fit: need at least 2 training points");
  if (!(config.shrinkage > 0.0 && config.shrinkage <= 1.0)) throw ConfigError("gbm_fit: shrinkage must be in (0, 1]");
  bool pos = false, neg = false;
  for (double y : targets) {
    if (y == 1.0) pos = true;
    else if (y == -1.0) neg = true;
    else throw ConfigError("gbm_fit: targets must be -1 or +1");
  }
  if (!pos || !neg) throw ConfigError("gbm_fit: targets contain a single class");

  const std::size_t n = targets.size(), d = features.dim(1);
  GbmModel model;
  model.shrinkage = config.shrinkage;
  model.feature_count = d;
  model.initial = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

  std::vector<double> fitted(n, model.initial), residuals(n);
  if (mse_trace) {
    mse_trace->clear();
    mse_trace->push_back(mse(targets, fitted));
  }
  for (std::size_t t = 0; t < config.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residuals[i] = targets[i] - fitted[i];
    RegressionTree tree = fit_tree(features, residuals, config.max_depth, config.min_leaf);
    for (std::size_t i = 0; i < n; ++i)
      fitted[i] += model.shrinkage * tree.predict(std::span<const double>(features.ptr() + i * d, d));
    model.trees.push_back(std::move(tree));
    if (mse_trace) mse_trace->push_back(mse(targets, fitted));
  }
  return model;
}

double gbm_predict(const GbmModel& model, std::span<const double> x) {
  if (x.size() != model.feature_count)
    throw DimensionError("gbm_predict: expected " + std::to_string(model.feature_count) + " features, got " +
                         std::to_string(x.size()));
  double s = 0.0;
  for (const auto& tree : model.trees) s += tree.predict(x);
  return model.initial + model.shrinkage * s;
}

Decision decide(double score) { return score > 0.0 ? Decision::authentic : Decision::not_authentic; }

Authentication authenticate_decision(const GbmModel& model, std::span<const double> x) {
  Authentication a;
  a.score = gbm_predict(model, x);
  a.decision = decide(a.score);
  return a;
}

}  // namespace biofuse
