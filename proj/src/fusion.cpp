#include "biofuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

double off_diagonal_norm(const std::vector<double>& a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
  return std::sqrt(2.0 * s);
}

}  // namespace

EigenDecomposition jacobi_eigen(const Tensor& symmetric, std::size_t max_sweeps) {
  if (symmetric.rank() != 2 || symmetric.dim(0) != symmetric.dim(1))
    throw DimensionError("jacobi_eigen: expected a square matrix, got " + shape_to_string(symmetric.shape()));
  const std::size_t n = symmetric.dim(0);
  std::vector<double> a(symmetric.data().begin(), symmetric.data().end());
  // Eigenvectors are accumulated as rows so every rotation touches contiguous memory.
  std::vector<double> vt(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vt[i * n + i] = 1.0;

  double scale = 0.0;
  for (double x : a) scale += x * x;
  scale = std::sqrt(scale);

  auto rotate_rows = [n](double* rp, double* rq, double c, double s) {
#pragma omp simd
    for (std::size_t k = 0; k < n; ++k) {
      const double xp = rp[k], xq = rq[k];
      rp[k] = c * xp - s * xq;
      rq[k] = s * xp + c * xq;
    }
  };

  EigenDecomposition out;
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    if (scale == 0.0 || off_diagonal_norm(a, n) <= 1e-14 * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        // J^T A J: rows p and q rotate, the columns follow by symmetry, and the
        // 2x2 pivot block is set in closed form.
        double* rp = a.data() + p * n;
        double* rq = a.data() + q * n;
        rotate_rows(rp, rq, c, s);
        for (std::size_t k = 0; k < n; ++k) {
          a[k * n + p] = rp[k];
          a[k * n + q] = rq[k];
        }
        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = a[q * n + p] = 0.0;
        rotate_rows(vt.data() + p * n, vt.data() + q * n, c, s);
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });
  out.values.resize(n);
  out.vectors = Tensor({n, n});
  for (std::size_t col = 0; col < n; ++col) {
    const std::size_t src = order[col];
    out.values[col] = a[src * n + src];
    const double* vec = vt.data() + src * n;
    std::size_t big = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(vec[r]) > std::abs(vec[big])) big = r;
    const double sign = vec[big] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors.at(r, col) = sign * vec[r];
  }
  return out;
}

Tensor covariance(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("covariance: expected n x D features");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (n < 2) throw ArgumentError("covariance: need at least 2 samples");
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features.at(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  Tensor centered({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered.at(i, j) = features.at(i, j) - mean[j];
  Tensor cov({d, d});
  const double inv = 1.0 / static_cast<double>(n - 1);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(d); ++a)
    for (std::size_t b = static_cast<std::size_t>(a); b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += centered.at(i, a) * centered.at(i, b);
      cov.at(a, b) = cov.at(b, a) = s * inv;
    }
  return cov;
}

std::size_t choose_components(std::span<const double> eigenvalues, double total_variance, double fraction) {
  if (eigenvalues.empty()) throw ArgumentError("choose_components: no eigenvalues");
  if (total_variance <= 0.0) return 1;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    cumulative += std::max(0.0, eigenvalues[i]);
    if (cumulative >= fraction * total_variance) return i + 1;
  }
  return eigenvalues.size();
}

FusionModel pca_fit(const Tensor& features, std::size_t k) {
  if (features.rank() != 2) throw DimensionError("pca_fit: expected n x D features");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (n < 2) throw ArgumentError("pca_fit: need at least 2 samples, got " + std::to_string(n));
  const std::size_t k_max = std::min(n - 1, d);
  if (k > k_max)
    throw ArgumentError("pca_fit: k = " + std::to_string(k) + " outside [1, " + std::to_string(k_max) + "]");

  FusionModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += features.at(i, j);
  for (auto& m : model.mean) m /= static_cast<double>(n);

  const Tensor cov = covariance(features);
  const EigenDecomposition eig = jacobi_eigen(cov);
  for (std::size_t j = 0; j < d; ++j) model.total_variance += cov.at(j, j);
  if (k == 0) k = std::min(k_max, choose_components(eig.values, model.total_variance, kDefaultExplainedVariance));

  model.components = Tensor({d, k});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < k; ++c) model.components.at(r, c) = eig.vectors.at(r, c);
  model.eigenvalues.resize(k);
  for (std::size_t c = 0; c < k; ++c) model.eigenvalues[c] = std::max(0.0, eig.values[c]);
  return model;
}

std::vector<double> pca_transform(std::span<const double> feature, const FusionModel& model) {
  const std::size_t d = model.input_dim(), k = model.k();
  if (feature.size() != d)
    throw DimensionError("pca_transform: feature length " + std::to_string(feature.size()) + " != " +
                         std::to_string(d));
  std::vector<double> out(k, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double centered = feature[r] - model.mean[r];
    for (std::size_t c = 0; c < k; ++c) out[c] += centered * model.components.at(r, c);
  }
  return out;
}

Tensor pca_transform(const Tensor& features, const FusionModel& model) {
  if (features.rank() != 2) throw DimensionError("pca_transform: expected n x D features");
  const std::size_t n = features.dim(0), d = features.dim(1), k = model.k();
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = pca_transform(std::span<const double>(features.ptr() + i * d, d), model);
    std::copy(row.begin(), row.end(), out.ptr() + i * k);
  }
  return out;
}

std::vector<double> pca_reconstruct(std::span<const double> projected, const FusionModel& model) {
  if (projected.size() != model.k()) throw DimensionError("pca_reconstruct: projection length mismatch");
  std::vector<double> out = model.mean;
  for (std::size_t r = 0; r < out.size(); ++r)
    for (std::size_t c = 0; c < model.k(); ++c) out[r] += model.components.at(r, c) * projected[c];
  return out;
}

std::vector<double> explained_variance(const FusionModel& model) {
  std::vector<double> out(model.k(), 0.0);
  if (model.total_variance <= 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = model.eigenvalues[i] / model.total_variance;
  return out;
}

}  // namespace biofuse
