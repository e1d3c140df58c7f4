#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "biofuse/datamodel.hpp"
#include "biofuse/network.hpp"
#include "biofuse/random.hpp"
#include "biofuse/tensor.hpp"

namespace testing {

inline biofuse::Tensor random_tensor(biofuse::Shape shape, biofuse::Rng& rng, double lo = -1.0, double hi = 1.0) {
  biofuse::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of `loss` with respect to param[i].
inline double central_difference(const std::function<double()>& loss, biofuse::Tensor& param, std::size_t i,
                                 double h = 1e-5) {
  const double saved = param[i];
  param[i] = saved + h;
  const double up = loss();
  param[i] = saved - h;
  const double down = loss();
  param[i] = saved;
  return (up - down) / (2.0 * h);
}

/// Central difference whose step shrinks until estimates at h and h/2 agree, so a
/// step straddling a relu or max-pool kink is not mistaken for a gradient error.
inline double kink_safe_difference(const std::function<double()>& loss, biofuse::Tensor& param, std::size_t i) {
  double h = 1e-5;
  double coarse = central_difference(loss, param, i, h);
  for (;;) {
    const double fine = central_difference(loss, param, i, h / 2);
    if (std::abs(coarse - fine) <= 1e-6 * std::max(std::abs(fine), 1e-3) || h < 1e-6) return fine;
    h /= 10;
    coarse = central_difference(loss, param, i, h);
  }
}

/// Largest relative error between `analytic` and finite differences over `entries`
/// (all entries when empty).
inline double max_gradient_error(const std::function<double()>& loss, biofuse::Tensor& param,
                                 const biofuse::Tensor& analytic, std::vector<std::size_t> entries = {}) {
  if (entries.empty())
    for (std::size_t i = 0; i < param.size(); ++i) entries.push_back(i);
  double worst = 0.0;
  for (std::size_t i : entries) worst = std::max(worst, rel_error(analytic[i], kink_safe_difference(loss, param, i)));
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Preprocessed sample of random content shaped for `config`.
inline biofuse::PreprocessedSample random_sample(const biofuse::NetworkConfig& config, biofuse::Rng& rng,
                                                 std::size_t steps = 6, std::size_t frames = 5) {
  biofuse::PreprocessedSample s;
  s.subject_id = "random";
  s.face = random_tensor({3, config.image_size, config.image_size}, rng, 0.0, 1.0);
  s.sig_image = random_tensor({3, config.image_size, config.image_size}, rng, 0.0, 1.0);
  s.sig_sequence = random_tensor({steps, config.sequence_channels}, rng);
  s.audio_spectrogram = random_tensor({config.spectrogram_bins, frames}, rng, 0.0, 2.0);
  return s;
}

/// Small network whose every parameter can be checked by finite differences.
inline biofuse::NetworkConfig tiny_network() {
  biofuse::NetworkConfig c;
  c.image_size = 8;
  c.conv1_channels = 2;
  c.conv2_channels = 3;
  c.refine_width = 4;
  c.hidden = 3;
  c.hidden_specific = 3;
  c.spectrogram_bins = 5;
  c.n_classes = 3;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("biofuse_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
