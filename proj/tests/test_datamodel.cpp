#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "biofuse/datamodel.hpp"
#include "biofuse/errors.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

// Direct-summation DFT magnitudes with a periodic Hann window.
Tensor naive_spectrogram(const std::vector<double>& x, std::size_t w, std::size_t hop) {
  const std::size_t frames = (x.size() - w) / hop + 1, bins = w / 2 + 1;
  Tensor out(Shape{bins, frames});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < w; ++n) {
        const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(w));
        acc += win * x[f * hop + n] *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(w));
      }
      out.at(k, f) = std::abs(acc);
    }
  return out;
}

Image bar_image(std::size_t size, double angle_deg, double cx, double cy, double half_len, double half_width) {
  Image img(size, size, 1, 1.0);
  const double a = angle_deg * std::numbers::pi / 180.0;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double along = dx * std::cos(a) + dy * std::sin(a);
      const double across = -dx * std::sin(a) + dy * std::cos(a);
      if (std::abs(along) <= half_len && std::abs(across) <= half_width) img.at(y, x) = 0.0;
    }
  return img;
}

// Soft stroke: Gaussian falloff around a segment, as rendered ink.
Image soft_bar(std::size_t size, double angle_deg, double half_len, double sigma) {
  Image img(size, size, 1, 1.0);
  const double a = angle_deg * std::numbers::pi / 180.0, c = 0.5 * static_cast<double>(size - 1);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      const double along = std::max(0.0, std::abs(dx * std::cos(a) + dy * std::sin(a)) - half_len);
      const double across = -dx * std::sin(a) + dy * std::cos(a);
      img.at(y, x) = 1.0 - std::exp(-(along * along + across * across) / (2.0 * sigma * sigma));
    }
  return img;
}

// Principal-axis angle of the ink from second moments.
double ink_angle_deg(const Image& img) {
  double m = 0, sx = 0, sy = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double w = 1.0 - img.at(y, x);
      m += w;
      sx += w * x;
      sy += w * y;
    }
  const double mx = sx / m, my = sy / m;
  double cxx = 0, cyy = 0, cxy = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double w = 1.0 - img.at(y, x);
      cxx += w * (x - mx) * (x - mx);
      cyy += w * (y - my) * (y - my);
      cxy += w * (x - mx) * (y - my);
    }
  return 0.5 * std::atan2(2 * cxy, cxx - cyy) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_SUITE("datamodel") {

TEST_CASE("resize_image") {
  Rng rng(1);
  Image img(5, 5, 3);
  for (double& v : img.pixels) v = rng.uniform();
  CHECK(resize_image(img, 5, 5) == img);

  Image flat(4, 7, 1, 0.3);
  for (double v : resize_image(flat, 9, 3).pixels) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  Image checker(2, 2, 1);
  checker.pixels = {0, 1, 1, 0};
  const Image up = resize_image(checker, 3, 3);
  CHECK(up.at(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(0, 2) == 1.0);
  CHECK_THROWS_AS(resize_image(checker, 0, 3), ArgumentError);
}

TEST_CASE("trim_or_pad_audio") {
  const std::vector<double> a = {1, 2, 3, 4};
  CHECK(trim_or_pad_audio(a, 4) == a);
  CHECK(trim_or_pad_audio(a, 2) == std::vector<double>{1, 2});
  CHECK(trim_or_pad_audio(std::vector<double>{1, 2}, 4) == std::vector<double>{1, 2, 0, 0});
}

TEST_CASE("spectrogram") {
  Rng rng(2);
  std::vector<double> x(64);
  for (double& v : x) v = rng.uniform(-1, 1);
  const Tensor s = spectrogram(x, 16, 8);
  CHECK(s.shape() == Shape{9, 7});
  CHECK(testing::max_abs_diff(s.data(), naive_spectrogram(x, 16, 8).data()) <= 1e-9);

  CHECK(spectrogram(std::vector<double>(40, 0.0), 16, 8) == Tensor(Shape{9, 4}));

  std::vector<double> sine(128);
  for (std::size_t n = 0; n < sine.size(); ++n) sine[n] = std::sin(2.0 * std::numbers::pi * 4.0 * n / 16.0);
  const Tensor ss = spectrogram(sine, 16, 8);
  for (std::size_t f = 0; f < ss.dim(1); ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < ss.dim(0); ++k)
      if (ss.at(k, f) > ss.at(best, f)) best = k;
    CHECK(best == 4);
  }

  std::vector<double> scaled(x);
  for (double& v : scaled) v *= 2.5;
  const Tensor s2 = spectrogram(scaled, 16, 8);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s2[i] == doctest::Approx(2.5 * s[i]).epsilon(1e-12));
  CHECK_THROWS_AS(spectrogram(std::vector<double>(10, 0.0), 16, 8), ArgumentError);
}

TEST_CASE("standardize_sequence") {
  Tensor seq(Shape{3, 4}, std::vector<double>{0, 10, 0.2, 0,  //
                                              2, 14, 0.2, 1,  //
                                              10, 12, 0.2, 3});
  const Tensor out = standardize_sequence(seq, 5);
  CHECK(out.shape() == Shape{5, 4});
  // x: mean 4, range 10 -> (-0.4, -0.2, 0.6); y: mean 12, range 4 -> (-0.5, 0.5, 0)
  // Resampling positions 0, 0.5, 1, 1.5, 2.
  const double x_expect[5] = {-0.4, -0.3, -0.2, 0.2, 0.6};
  const double y_expect[5] = {-0.5, 0.0, 0.5, 0.25, 0.0};
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(out.at(t, kPosX) == doctest::Approx(x_expect[t]).epsilon(1e-12));
    CHECK(out.at(t, kPosY) == doctest::Approx(y_expect[t]).epsilon(1e-12));
    CHECK(out.at(t, kPressure) == 0.0);
  }
  // dt over total duration 4: (0, 0.25, 0.75) resampled.
  CHECK(out.at(1, kDeltaT) == doctest::Approx(0.125));
  CHECK(out.at(4, kDeltaT) == doctest::Approx(0.75));

  // A standardized sequence of the target length is a fixed point.
  Rng rng(3);
  Tensor raw = testing::random_tensor(Shape{7, 4}, rng, 0.0, 1.0);
  const Tensor once = standardize_sequence(raw, 7);
  const Tensor twice = standardize_sequence(once, 7);
  CHECK(testing::max_abs_diff(once.data(), twice.data()) <= 1e-12);
  for (std::size_t t = 0; t < 7; ++t) {
    CHECK(once.at(t, kPressure) >= 0.0);
    CHECK(once.at(t, kPressure) <= 1.0);
  }

  Tensor flat(Shape{4, 4}, 1.0);
  const Tensor f = standardize_sequence(flat, 4);
  CHECK(f.all_finite());
  CHECK_THROWS_AS(standardize_sequence(Tensor(Shape{1, 4}), 4), ArgumentError);
}

TEST_CASE("normalize_signature_image") {
  const Image horizontal = bar_image(40, 0.0, 20, 20, 12, 2);
  const Image a = normalize_signature_image(horizontal, 32);
  CHECK(a.height == 32);
  CHECK(a.width == 32);
  const Image again = normalize_signature_image(a, 32);
  CHECK(testing::max_abs_diff(a.pixels, again.pixels) <= 0.02);

  const Image shifted = bar_image(60, 0.0, 30, 37, 12, 2);
  const Image b = normalize_signature_image(shifted, 32);
  CHECK(a.pixels.size() == b.pixels.size());
  Image padded(60, 60, 1, 1.0);
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x) padded.at(y + 10, x + 10) = horizontal.at(y, x);
  CHECK(normalize_signature_image(padded, 32) == a);

  const Image rotated = bar_image(64, 45.0, 32, 32, 20, 3);
  const Image r = normalize_signature_image(rotated, 48);
  CHECK(std::abs(ink_angle_deg(r)) <= 2.0);

  // Scaling the ink changes the output by interpolation error only.
  const Image small = soft_bar(41, 20.0, 12, 1.5);
  const Image big = soft_bar(81, 20.0, 24, 3.0);
  const Image nb = normalize_signature_image(big, 32), ns = normalize_signature_image(small, 32);
  double mean_diff = 0.0;
  for (std::size_t i = 0; i < nb.pixels.size(); ++i) mean_diff += std::abs(nb.pixels[i] - ns.pixels[i]);
  CHECK(mean_diff / static_cast<double>(nb.pixels.size()) <= 0.02);

  CHECK_THROWS_AS(normalize_signature_image(Image(10, 10, 1, 1.0), 32), ArgumentError);
}

TEST_CASE("preprocess produces fixed extents deterministically") {
  Rng rng(4);
  PreprocessConfig cfg;
  for (auto [h, w, t1, n] : {std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>{20, 30, 15, 100},
                              {50, 41, 60, 500}}) {
    BiometricSample s;
    s.subject_id = "x";
    s.face = Image(h, w, 3);
    for (double& v : s.face.pixels) v = rng.uniform();
    s.sig_image = bar_image(std::max(h, w), 10.0, w / 2.0, h / 2.0, 6, 1.5);
    s.sig_sequence = testing::random_tensor(Shape{t1, 4}, rng, 0.0, 1.0);
    s.audio.samples.resize(n);
    for (double& v : s.audio.samples) v = rng.uniform(-1, 1);
    const PreprocessedSample p = preprocess(s, cfg);
    CHECK(p.face.shape() == Shape{3, 32, 32});
    CHECK(p.sig_image.shape() == Shape{3, 32, 32});
    CHECK(p.sig_sequence.shape() == Shape{32, 4});
    CHECK(p.audio_spectrogram.shape() == Shape{cfg.spectrogram_bins(), cfg.spectrogram_frames()});
    for (double v : p.audio_spectrogram.data()) CHECK(v >= 0.0);
    const PreprocessedSample q = preprocess(s, cfg);
    CHECK(p.face == q.face);
    CHECK(p.sig_image == q.sig_image);
    CHECK(p.sig_sequence == q.sig_sequence);
    CHECK(p.audio_spectrogram == q.audio_spectrogram);
    // Grayscale signature replicated across the three channels.
    for (std::size_t i = 0; i < 32 * 32; ++i) {
      CHECK(p.sig_image[i] == p.sig_image[1024 + i]);
      CHECK(p.sig_image[i] == p.sig_image[2048 + i]);
    }
  }
}

}  // TEST_SUITE
