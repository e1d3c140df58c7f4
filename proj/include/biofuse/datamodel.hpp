#pragma once

// Raw biometric inputs and the preprocessing that brings every modality to
// fixed extents.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "biofuse/tensor.hpp"

namespace biofuse {

/// Row-major H x W x C image with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct Audio {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  unsigned sample_rate = 16000;

  friend bool operator==(const Audio&, const Audio&) = default;
};

/// Pen trajectory columns of a dynamic signature.
enum SequenceChannel : std::size_t { kPosX = 0, kPosY = 1, kPressure = 2, kDeltaT = 3 };
inline constexpr std::size_t kSequenceChannels = 4;

struct BiometricSample {
  std::string subject_id;
  Image face;          // RGB
  Image sig_image;     // grayscale, dark ink on white
  Tensor sig_sequence; // T1 x 4 (x, y, pressure, dt)
  Audio audio;
};

struct PreprocessConfig {
  std::size_t image_size = 32;
  std::size_t sequence_length = 32;
  std::size_t audio_length = 264;
  std::size_t spectrogram_window = 16;
  std::size_t spectrogram_hop = 8;

  std::size_t spectrogram_bins() const { return spectrogram_window / 2 + 1; }
  std::size_t spectrogram_frames() const {
    return (audio_length - spectrogram_window) / spectrogram_hop + 1;
  }
  /// Throws ConfigError when the extents cannot be produced.
  void validate() const;
};

struct PreprocessedSample {
  std::string subject_id;
  Tensor face;               // 3 x S x S
  Tensor sig_image;          // 3 x S x S (gray replicated)
  Tensor sig_sequence;       // T x 4
  Tensor audio_spectrogram;  // F x Ta
};

/// Bilinear resampling with corner-aligned grids.
Image resize_image(const Image& img, std::size_t target_height, std::size_t target_width);

/// Keeps the first `target_len` samples, zero-padding at the end when short.
std::vector<double> trim_or_pad_audio(std::span<const double> pcm, std::size_t target_len);

/// Hann-windowed DFT magnitudes, (window/2 + 1) bins x frames.
Tensor spectrogram(std::span<const double> pcm, std::size_t window, std::size_t hop);

/// Centres x/y to zero mean and unit range, min-max scales pressure, divides
/// dt by the total duration, then linearly resamples to `target_steps` rows.
Tensor standardize_sequence(const Tensor& seq, std::size_t target_steps);

/// Ink below 0.5 counts as signature. Rotates the ink's principal axis to
/// horizontal, crops to the ink bounding box and fits it aspect-preserving
/// into a white `target` x `target` square.
Image normalize_signature_image(const Image& img, std::size_t target);

/// Luminance of an RGB image; grayscale images are returned unchanged.
Image to_grayscale(const Image& img);

/// C x H x W tensor from an image; a single channel is replicated `channels` times.
Tensor image_to_tensor(const Image& img, std::size_t channels);

PreprocessedSample preprocess(const BiometricSample& sample, const PreprocessConfig& config);

}  // namespace biofuse
