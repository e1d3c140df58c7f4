#pragma once

// Least-squares gradient boosting over regression trees, with a sign readout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "biofuse/tensor.hpp"

namespace biofuse {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // leaf: mean of routed residuals
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;
  /// Node index of the leaf that x routes to.
  std::size_t leaf_index(std::span<const double> x) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

/// Greedy squared-error splits at midpoints between consecutive distinct
/// values. A node becomes a leaf at max_depth, when no split leaves at least
/// min_leaf points on both sides, or when its residuals are constant.
RegressionTree fit_tree(const Tensor& features, std::span<const double> residuals, std::size_t max_depth,
                        std::size_t min_leaf);

struct GbmConfig {
  std::size_t trees = 100;
  double shrinkage = 0.1;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 2;
};

struct GbmModel {
  double initial = 0.0;
  double shrinkage = 0.1;
  std::size_t feature_count = 0;
  std::vector<RegressionTree> trees;

  friend bool operator==(const GbmModel&, const GbmModel&) = default;
};

/// Targets must be -1/+1 with both classes present. When `mse_trace` is given
/// it receives the training MSE after initialisation and after every tree.
GbmModel gbm_fit(const Tensor& features, std::span<const double> targets, const GbmConfig& config,
                 std::vector<double>* mse_trace = nullptr);

/// initial + shrinkage * sum of tree outputs.
double gbm_predict(const GbmModel& model, std::span<const double> x);

enum class Decision { authentic, not_authentic };

struct Authentication {
  Decision decision = Decision::not_authentic;
  double score = 0.0;
};

/// Sign readout; a score of exactly 0 is rejected.
Authentication authenticate_decision(const GbmModel& model, std::span<const double> x);
Decision decide(double score);

}  // namespace biofuse
