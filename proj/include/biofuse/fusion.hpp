#pragma once

// PCA over integrated features: centre, 1/(n-1) covariance, cyclic Jacobi
// eigendecomposition, projection onto the top-k eigenvectors.

#include <cstddef>
#include <span>
#include <vector>

#include "biofuse/tensor.hpp"

namespace biofuse {

struct EigenDecomposition {
  std::vector<double> values;  // descending; equal values keep original index order
  Tensor vectors;              // n x n, column j pairs with values[j]
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations on a symmetric matrix. Each eigenvector's
/// largest-magnitude entry is made positive.
EigenDecomposition jacobi_eigen(const Tensor& symmetric, std::size_t max_sweeps = 100);

/// Sample covariance with the 1/(n-1) divisor.
Tensor covariance(const Tensor& features);

struct FusionModel {
  std::vector<double> mean;         // D
  Tensor components;                // D x k, orthonormal columns
  std::vector<double> eigenvalues;  // k, descending, >= 0
  double total_variance = 0.0;      // trace of the covariance

  std::size_t input_dim() const { return mean.size(); }
  std::size_t k() const { return eigenvalues.size(); }
};

inline constexpr double kDefaultExplainedVariance = 0.95;

/// Smallest k whose cumulative explained variance reaches `fraction`.
std::size_t choose_components(std::span<const double> eigenvalues, double total_variance, double fraction);

/// k = 0 selects the smallest k reaching kDefaultExplainedVariance
/// (capped at min(n - 1, D)).
FusionModel pca_fit(const Tensor& features, std::size_t k = 0);

std::vector<double> pca_transform(std::span<const double> feature, const FusionModel& model);
/// Row-wise transform of an n x D matrix.
Tensor pca_transform(const Tensor& features, const FusionModel& model);
/// W * f_pca + mean.
std::vector<double> pca_reconstruct(std::span<const double> projected, const FusionModel& model);

/// lambda_i / trace(covariance) for each retained component.
std::vector<double> explained_variance(const FusionModel& model);

}  // namespace biofuse
