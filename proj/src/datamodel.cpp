#include "biofuse/datamodel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

// FFTW's planner is not reentrant; execution on distinct buffers is.
std::mutex fftw_planner_mutex;

double lerp(double a, double b, double f) { return a + f * (b - a); }

// Corner-aligned source coordinate of output index i.
double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  if (out == 1) return 0.5 * static_cast<double>(in - 1);
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

// Bilinear sample of channel c at fractional (y, x); `outside` beyond the border.
double sample(const Image& img, double y, double x, std::size_t c, double outside) {
  if (y < 0.0 || x < 0.0 || y > static_cast<double>(img.height - 1) ||
      x > static_cast<double>(img.width - 1))
    return outside;
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = lerp(img.at(y0, x0, c), img.at(y0, x1, c), fx);
  const double bottom = lerp(img.at(y1, x0, c), img.at(y1, x1, c), fx);
  return lerp(top, bottom, fy);
}

struct Box {
  std::size_t y0, y1, x0, x1;  // inclusive
  std::size_t height() const { return y1 - y0 + 1; }
  std::size_t width() const { return x1 - x0 + 1; }
};

constexpr double kInkThreshold = 0.5;

bool ink_box(const Image& gray, Box& box) {
  bool found = false;
  box = {std::numeric_limits<std::size_t>::max(), 0, std::numeric_limits<std::size_t>::max(), 0};
  for (std::size_t y = 0; y < gray.height; ++y)
    for (std::size_t x = 0; x < gray.width; ++x)
      if (gray.at(y, x) < kInkThreshold) {
        found = true;
        box.y0 = std::min(box.y0, y);
        box.y1 = std::max(box.y1, y);
        box.x0 = std::min(box.x0, x);
        box.x1 = std::max(box.x1, x);
      }
  return found;
}

struct InkExtent {
  double y0, y1, x0, x1;
};

// Sub-pixel extent of the ink contour: linear threshold crossings between
// ink and paper neighbours, or the pixel itself on the image border.
InkExtent ink_extent(const Image& gray) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  InkExtent e{inf, -inf, inf, -inf};
  auto ink = [&](std::size_t y, std::size_t x) { return gray.at(y, x) < kInkThreshold; };
  auto cross = [](double a, double b) { return (a - kInkThreshold) / (a - b); };
  for (std::size_t y = 0; y < gray.height; ++y)
    for (std::size_t x = 0; x < gray.width; ++x) {
      if (!ink(y, x)) continue;
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double left = x == 0 || ink(y, x - 1) ? fx : fx - 1.0 + cross(gray.at(y, x - 1), gray.at(y, x));
      const double right =
          x + 1 == gray.width || ink(y, x + 1) ? fx : fx + 1.0 - cross(gray.at(y, x + 1), gray.at(y, x));
      const double up = y == 0 || ink(y - 1, x) ? fy : fy - 1.0 + cross(gray.at(y - 1, x), gray.at(y, x));
      const double down =
          y + 1 == gray.height || ink(y + 1, x) ? fy : fy + 1.0 - cross(gray.at(y + 1, x), gray.at(y, x));
      e.x0 = std::min(e.x0, left);
      e.x1 = std::max(e.x1, right);
      e.y0 = std::min(e.y0, up);
      e.y1 = std::max(e.y1, down);
    }
  return e;
}

Image crop(const Image& img, const Box& b) {
  Image out(b.height(), b.width(), img.channels);
  for (std::size_t y = 0; y < b.height(); ++y)
    for (std::size_t x = 0; x < b.width(); ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(b.y0 + y, b.x0 + x, c);
  return out;
}

// Rotates the ink's major axis onto the x axis. Works in crop-local
// coordinates and about an integer pivot so translated inputs give
// bit-identical results and a zero angle is an exact copy.
Image rotate_to_principal_axis(const Image& ink) {
  double mass = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t y = 0; y < ink.height; ++y)
    for (std::size_t x = 0; x < ink.width; ++x) {
      const double v = ink.at(y, x);
      if (v >= kInkThreshold) continue;
      const double w = 1.0 - v;
      mass += w;
      sx += w * static_cast<double>(x);
      sy += w * static_cast<double>(y);
    }
  const double cx = sx / mass, cy = sy / mass;
  double mxx = 0.0, myy = 0.0, mxy = 0.0;
  for (std::size_t y = 0; y < ink.height; ++y)
    for (std::size_t x = 0; x < ink.width; ++x) {
      const double v = ink.at(y, x);
      if (v >= kInkThreshold) continue;
      const double w = 1.0 - v, dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      mxx += w * dx * dx;
      myy += w * dy * dy;
      mxy += w * dx * dy;
    }
  const double theta = 0.5 * std::atan2(2.0 * mxy, mxx - myy);
  if (theta == 0.0) return ink;

  const double px = std::round(cx), py = std::round(cy);
  const double reach = std::hypot(static_cast<double>(ink.width), static_cast<double>(ink.height));
  const auto radius = static_cast<std::size_t>(std::ceil(reach)) + 1;
  const std::size_t side = 2 * radius + 1;
  const double c = std::cos(theta), s = std::sin(theta);
  Image out(side, side, 1, 1.0);
  for (std::size_t v = 0; v < side; ++v)
    for (std::size_t u = 0; u < side; ++u) {
      const double du = static_cast<double>(u) - static_cast<double>(radius);
      const double dv = static_cast<double>(v) - static_cast<double>(radius);
      out.at(v, u) = sample(ink, py + du * s + dv * c, px + du * c - dv * s, 0, 1.0);
    }
  return out;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0)
    throw ConfigError("image_size must be a positive multiple of 4, got " + std::to_string(image_size));
  if (sequence_length == 0) throw ConfigError("sequence_length must be positive");
  if (spectrogram_window < 2) throw ConfigError("spectrogram_window must be at least 2");
  if (spectrogram_hop == 0) throw ConfigError("spectrogram_hop must be positive");
  if (audio_length < spectrogram_window)
    throw ConfigError("audio_length must be at least spectrogram_window");
}

Image resize_image(const Image& img, std::size_t target_height, std::size_t target_width) {
  if (target_height == 0 || target_width == 0) throw ArgumentError("resize_image: zero target extent");
  if (img.height == 0 || img.width == 0) throw ArgumentError("resize_image: empty source image");
  Image out(target_height, target_width, img.channels);
  for (std::size_t y = 0; y < target_height; ++y) {
    const double sy = source_coord(y, img.height, target_height);
    for (std::size_t x = 0; x < target_width; ++x) {
      const double sx = source_coord(x, img.width, target_width);
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = std::clamp(sample(img, sy, sx, c, 0.0), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<double> trim_or_pad_audio(std::span<const double> pcm, std::size_t target_len) {
  if (target_len == 0) throw ArgumentError("trim_or_pad_audio: target length must be positive");
  std::vector<double> out(target_len, 0.0);
  std::copy_n(pcm.begin(), std::min(pcm.size(), target_len), out.begin());
  return out;
}

Tensor spectrogram(std::span<const double> pcm, std::size_t window, std::size_t hop) {
  if (window == 0 || window > pcm.size())
    throw ArgumentError("spectrogram: window " + std::to_string(window) + " longer than signal of " +
                        std::to_string(pcm.size()) + " samples");
  if (hop == 0) throw ArgumentError("spectrogram: hop must be positive");
  const std::size_t bins = window / 2 + 1;
  const std::size_t frames = (pcm.size() - window) / hop + 1;

  std::vector<double> hann(window);
  for (std::size_t n = 0; n < window; ++n)
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                   static_cast<double>(window));

  double* in = fftw_alloc_real(window);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(window), in, out, FFTW_ESTIMATE);
  }
  Tensor spec({bins, frames});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t n = 0; n < window; ++n) in[n] = pcm[f * hop + n] * hann[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) spec.at(k, f) = std::hypot(out[k][0], out[k][1]);
  }
  {
    std::lock_guard lock(fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  require_finite(spec, "spectrogram");
  return spec;
}

Tensor standardize_sequence(const Tensor& seq, std::size_t target_steps) {
  if (seq.rank() != 2 || seq.dim(1) != kSequenceChannels)
    throw DimensionError("standardize_sequence: expected T x 4 input, got " + shape_to_string(seq.shape()));
  if (seq.dim(0) < 2) throw ArgumentError("standardize_sequence: need at least 2 timesteps");
  if (target_steps == 0) throw ArgumentError("standardize_sequence: target length must be positive");
  const std::size_t steps = seq.dim(0);

  Tensor norm = seq;
  auto column = [&](std::size_t c, auto&& fn) {
    for (std::size_t t = 0; t < steps; ++t) norm.at(t, c) = fn(seq.at(t, c));
  };
  auto stats = [&](std::size_t c) {
    double lo = seq.at(0, c), hi = lo, sum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      lo = std::min(lo, seq.at(t, c));
      hi = std::max(hi, seq.at(t, c));
      sum += seq.at(t, c);
    }
    return std::array<double, 3>{lo, hi, sum};
  };

  for (std::size_t c : {kPosX, kPosY}) {
    const auto [lo, hi, sum] = stats(c);
    const double mean = sum / static_cast<double>(steps);
    const double range = hi > lo ? hi - lo : 1.0;
    column(c, [&](double v) { return (v - mean) / range; });
  }
  {
    const auto [lo, hi, sum] = stats(kPressure);
    (void)sum;
    column(kPressure, [&](double v) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; });
  }
  {
    const auto [lo, hi, total] = stats(kDeltaT);
    (void)lo;
    (void)hi;
    const double duration = total > 0.0 ? total : 1.0;
    column(kDeltaT, [&](double v) { return v / duration; });
  }

  Tensor out({target_steps, kSequenceChannels});
  for (std::size_t i = 0; i < target_steps; ++i) {
    const double pos = source_coord(i, steps, target_steps);
    const auto i0 = static_cast<std::size_t>(pos);
    const std::size_t i1 = std::min(i0 + 1, steps - 1);
    const double f = pos - static_cast<double>(i0);
    for (std::size_t c = 0; c < kSequenceChannels; ++c) out.at(i, c) = lerp(norm.at(i0, c), norm.at(i1, c), f);
  }
  require_finite(out, "standardize_sequence");
  return out;
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

Image normalize_signature_image(const Image& img, std::size_t target) {
  if (target == 0) throw ArgumentError("normalize_signature_image: zero target extent");
  const Image gray = to_grayscale(img);
  Box box{};
  if (!ink_box(gray, box)) throw ArgumentError("normalize_signature_image: blank input (no ink pixels)");

  // Keep a halo around the box so sub-threshold edge shading survives the crop.
  constexpr std::size_t halo = 2;
  box.y0 = box.y0 > halo ? box.y0 - halo : 0;
  box.x0 = box.x0 > halo ? box.x0 - halo : 0;
  box.y1 = std::min(box.y1 + halo, gray.height - 1);
  box.x1 = std::min(box.x1 + halo, gray.width - 1);
  const Image ink = rotate_to_principal_axis(crop(gray, box));
  const InkExtent e = ink_extent(ink);
  const std::size_t margin = std::max<std::size_t>(1, target / 16);
  const std::size_t avail = target > 2 * margin ? target - 2 * margin : target;
  const double span = std::max({e.x1 - e.x0, e.y1 - e.y0, 1.0});
  const double step = span / static_cast<double>(avail - 1 > 0 ? avail - 1 : 1);
  const double cx = 0.5 * (e.x0 + e.x1), cy = 0.5 * (e.y0 + e.y1), mid = 0.5 * static_cast<double>(target - 1);

  Image out(target, target, 1);
  for (std::size_t y = 0; y < target; ++y)
    for (std::size_t x = 0; x < target; ++x) {
      const double sy = cy + (static_cast<double>(y) - mid) * step;
      const double sx = cx + (static_cast<double>(x) - mid) * step;
      out.at(y, x) = std::clamp(sample(ink, sy, sx, 0, 1.0), 0.0, 1.0);
    }
  return out;
}

Tensor image_to_tensor(const Image& img, std::size_t channels) {
  if (img.channels != 1 && img.channels != channels)
    throw DimensionError("image_to_tensor: cannot map " + std::to_string(img.channels) + " channels to " +
                         std::to_string(channels));
  Tensor t({channels, img.height, img.width});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, img.channels == 1 ? 0 : c);
  return t;
}

PreprocessedSample preprocess(const BiometricSample& sample, const PreprocessConfig& config) {
  config.validate();
  if (sample.audio.sample_rate == 0) throw ArgumentError("audio sample rate must be positive");
  PreprocessedSample out;
  out.subject_id = sample.subject_id;
  out.face = image_to_tensor(resize_image(sample.face, config.image_size, config.image_size), 3);
  out.sig_image = image_to_tensor(normalize_signature_image(sample.sig_image, config.image_size), 3);
  out.sig_sequence = standardize_sequence(sample.sig_sequence, config.sequence_length);
  const auto pcm = trim_or_pad_audio(sample.audio.samples, config.audio_length);
  out.audio_spectrogram = spectrogram(pcm, config.spectrogram_window, config.spectrogram_hop);
  return out;
}

}  // namespace biofuse
