#include "biofuse/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "biofuse/errors.hpp"
#include "biofuse/random.hpp"

namespace biofuse {

namespace {

constexpr double kPi = std::numbers::pi;

// Latent slices per modality.
constexpr std::size_t kFaceZ = 0;    // 10 entries
constexpr std::size_t kSigZ = 10;    // 12 entries
constexpr std::size_t kVoiceZ = 22;  // 10 entries

// Nuisance magnitudes at noise = 1.
constexpr double kFaceBrightness = 0.3;
constexpr double kFaceGradient = 0.7;
constexpr double kFaceContrast = 0.35;
constexpr double kFaceShift = 0.02;
constexpr double kFacePixel = 0.03;
// Face deviations around mid-gray are compressed so face activations do not swamp
// the other modalities in the concatenated feature.
constexpr double kFaceRange = 0.6;
constexpr double kSigJitter = 0.03;
constexpr double kSigRotation = 0.12;
constexpr double kSigScale = 0.1;
constexpr double kSigInk = 0.4;
constexpr double kSigBackground = 0.35;
constexpr double kSigWidth = 0.8;
constexpr double kSeqSlant = 1.0;
constexpr double kSeqWarp = 0.8;
constexpr double kSeqPressure = 0.05;
constexpr double kVoiceGain = 0.8;
constexpr double kVoiceDetune = 0.01;
constexpr double kVoiceNoise = 0.1;

constexpr std::size_t kControlPoints = 7;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::uint64_t sample_stream(std::size_t subject, std::size_t sample) {
  return (static_cast<std::uint64_t>(subject) << 20) | static_cast<std::uint64_t>(sample + 1);
}

Image render_face(const std::vector<double>& z, const SynthConfig& cfg, double noise, Rng& rng) {
  const double brightness = noise * kFaceBrightness * rng.normal();
  const double contrast = std::exp(noise * kFaceContrast * rng.normal());
  const double light_angle = 2.0 * kPi * rng.uniform();
  const double light = noise * kFaceGradient * rng.normal();
  const double sx = noise * kFaceShift * rng.normal();
  const double sy = noise * kFaceShift * rng.normal();

  const double cx = 0.5 + 0.15 * std::tanh(z[kFaceZ + 0]) + sx;
  const double cy = 0.5 + 0.15 * std::tanh(z[kFaceZ + 1]) + sy;
  const double freq = 2.0 + 3.0 * sigmoid(z[kFaceZ + 2]);
  const double phase = kPi * std::tanh(z[kFaceZ + 3]);
  const double angular = std::round(2.0 + 2.0 * sigmoid(z[kFaceZ + 4]));
  const double twist = 0.5 * std::tanh(z[kFaceZ + 5]);
  const std::array<double, 3> tint = {0.6 + 0.25 * std::tanh(z[kFaceZ + 6]), 0.6 + 0.25 * std::tanh(z[kFaceZ + 7]),
                                      0.6 + 0.25 * std::tanh(z[kFaceZ + 8])};
  const double width = 0.25 + 0.15 * sigmoid(z[kFaceZ + 9]);

  const std::size_t n = cfg.face_size;
  Image img(n, n, 3);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(n);
      const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(n);
      const double px = ux - cx;
      const double py = uy - cy;
      const double r = std::hypot(px, py);
      const double a = std::atan2(py, px);
      const double envelope = std::exp(-r * r / (2.0 * width * width));
      const double pattern = std::cos(2.0 * kPi * freq * r + phase) * std::cos(angular * a + twist * 2.0 * kPi * r);
      const double base = 0.5 + 0.35 * envelope * pattern;
      const double shade = light * ((ux - 0.5) * std::cos(light_angle) + (uy - 0.5) * std::sin(light_angle));
      for (std::size_t c = 0; c < 3; ++c) {
        const double v =
            0.5 + kFaceRange * (contrast * (tint[c] * base - 0.3) + brightness + shade + noise * kFacePixel * rng.normal());
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

struct Point {
  double x;
  double y;
};

Point catmull_rom(const std::vector<Point>& p, double t) {
  const double span = static_cast<double>(p.size() - 1);
  const double u = std::clamp(t, 0.0, 1.0) * span;
  const std::size_t i = std::min(static_cast<std::size_t>(u), p.size() - 2);
  const double s = u - static_cast<double>(i);
  const Point& p1 = p[i];
  const Point& p2 = p[i + 1];
  const Point& p0 = i > 0 ? p[i - 1] : p1;
  const Point& p3 = i + 2 < p.size() ? p[i + 2] : p2;
  auto blend = [s](double a, double b, double c, double d) {
    return 0.5 * ((2.0 * b) + (-a + c) * s + (2.0 * a - 5.0 * b + 4.0 * c - d) * s * s +
                  (-a + 3.0 * b - 3.0 * c + d) * s * s * s);
  };
  return {blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y)};
}

// Control points in a unit box, x left to right.
std::vector<Point> signature_controls(const std::vector<double>& z, double noise, Rng& rng) {
  std::vector<Point> pts(kControlPoints);
  for (std::size_t i = 0; i < kControlPoints; ++i) {
    const double base_x = static_cast<double>(i) / static_cast<double>(kControlPoints - 1);
    pts[i].x = base_x + 0.06 * std::tanh(z[kSigZ + (i + 3) % kControlPoints]) + noise * kSigJitter * rng.normal();
    pts[i].y = 0.5 + 0.4 * std::tanh(z[kSigZ + i]) + noise * kSigJitter * rng.normal();
  }
  const double angle = noise * kSigRotation * rng.normal();
  const double scale = 1.0 + noise * kSigScale * rng.normal();
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (Point& p : pts) {
    const double dx = (p.x - 0.5) * scale;
    const double dy = (p.y - 0.5) * scale;
    p = {0.5 + ca * dx - sa * dy, 0.5 + sa * dx + ca * dy};
  }
  return pts;
}

Image render_signature(const std::vector<Point>& controls, const SynthConfig& cfg, double noise, Rng& rng) {
  const double ink_level = std::clamp(noise * kSigInk * std::abs(rng.normal()), 0.0, 0.4);
  const double background = std::clamp(1.0 - noise * kSigBackground * std::abs(rng.normal()), 0.6, 1.0);
  const double radius = 1.1 * std::exp(noise * kSigWidth * rng.normal());
  const double h = static_cast<double>(cfg.sig_height);
  const double w = static_cast<double>(cfg.sig_width);
  const double margin = 0.15;
  const std::size_t steps = 400;
  std::vector<Point> path(steps + 1);
  for (std::size_t s = 0; s <= steps; ++s) {
    const Point p = catmull_rom(controls, static_cast<double>(s) / steps);
    path[s] = {(margin + (1.0 - 2.0 * margin) * p.x) * (w - 1.0), (margin + (1.0 - 2.0 * margin) * p.y) * (h - 1.0)};
  }
  Image img(cfg.sig_height, cfg.sig_width, 1, background);
  for (std::size_t y = 0; y < cfg.sig_height; ++y) {
    for (std::size_t x = 0; x < cfg.sig_width; ++x) {
      double best = 1e300;
      for (const Point& p : path) {
        const double dx = p.x - static_cast<double>(x);
        const double dy = p.y - static_cast<double>(y);
        best = std::min(best, dx * dx + dy * dy);
      }
      const double ink = std::exp(-best / (2.0 * radius * radius));
      img.at(y, x) = std::clamp(background - ink * (background - ink_level), 0.0, 1.0);
    }
  }
  return img;
}

Tensor render_sequence(const std::vector<Point>& controls, const std::vector<double>& z, const SynthConfig& cfg,
                       double noise, Rng& rng) {
  const std::size_t n = cfg.sequence_points;
  const double warp = std::exp(0.4 * std::tanh(z[kSigZ + 7]) + noise * kSeqWarp * rng.normal());
  const double slant = noise * kSeqSlant * rng.normal();
  const double cs = std::cos(slant);
  const double sn = std::sin(slant);
  const double p_freq = 1.0 + 2.0 * sigmoid(z[kSigZ + 8]);
  const double p_phase = kPi * std::tanh(z[kSigZ + 9]);
  const double dt_base = 0.008 + 0.004 * sigmoid(z[kSigZ + 10]);
  const double dt_mod = 0.3 * std::tanh(z[kSigZ + 11]);
  Tensor seq(Shape{n, kSequenceChannels});
  for (std::size_t t = 0; t < n; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(n - 1);
    const double s = std::pow(u, warp);
    const Point p = catmull_rom(controls, s);
    seq.at(t, kPosX) = 100.0 * (cs * (p.x - 0.5) - sn * (p.y - 0.5));
    seq.at(t, kPosY) = 100.0 * (sn * (p.x - 0.5) + cs * (p.y - 0.5));
    seq.at(t, kPressure) =
        std::clamp(0.5 + 0.35 * std::sin(2.0 * kPi * p_freq * s + p_phase) + noise * kSeqPressure * rng.normal(),
                   0.0, 1.0);
    seq.at(t, kDeltaT) = t == 0 ? 0.0 : dt_base * (1.0 + dt_mod * std::sin(2.0 * kPi * s));
  }
  return seq;
}

Audio render_voice(const std::vector<double>& z, const SynthConfig& cfg, double noise, Rng& rng) {
  constexpr std::size_t kTones = 3;
  const double rate = static_cast<double>(cfg.sample_rate);
  const double gain = std::exp(noise * kVoiceGain * rng.normal());
  const double floor = noise * kVoiceNoise * std::abs(rng.normal());
  std::array<double, kTones> freq{};
  std::array<double, kTones> amp{};
  std::array<double, kTones> phase{};
  for (std::size_t j = 0; j < kTones; ++j) {
    // Bands keep the tones apart: [300, 2300), [2300, 4300), ...
    const double lo = 300.0 + 2000.0 * static_cast<double>(j);
    freq[j] = (lo + 2000.0 * sigmoid(z[kVoiceZ + 2 * j])) * (1.0 + noise * kVoiceDetune * rng.normal());
    amp[j] = 0.1 + 0.15 * sigmoid(z[kVoiceZ + 2 * j + 1]);
    phase[j] = noise * 2.0 * kPi * rng.uniform();
  }
  const double vibrato = 4.0 + 4.0 * sigmoid(z[kVoiceZ + 6]);
  const double depth = 0.2 * sigmoid(z[kVoiceZ + 7]);

  Audio audio;
  audio.sample_rate = cfg.sample_rate;
  audio.samples.resize(cfg.audio_samples);
  for (std::size_t i = 0; i < cfg.audio_samples; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    for (std::size_t j = 0; j < kTones; ++j) v += amp[j] * std::sin(2.0 * kPi * freq[j] * t + phase[j]);
    v *= gain * (1.0 + depth * std::sin(2.0 * kPi * vibrato * t));
    v += floor * rng.normal();
    audio.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return audio;
}

std::string subject_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%02zu", index);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects < 2) throw ArgumentError("synthgen: n_subjects must be at least 2");
  if (samples_per_subject < 2) throw ArgumentError("synthgen: samples_per_subject must be at least 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ArgumentError("synthgen: noise must be finite and >= 0");
  for (double m : modality_noise)
    if (!(m >= 0.0) || !std::isfinite(m)) throw ArgumentError("synthgen: modality noise must be finite and >= 0");
  if (face_size < 4 || sig_height < 8 || sig_width < 8) throw ArgumentError("synthgen: image extents too small");
  if (sequence_points < 2) throw ArgumentError("synthgen: sequence_points must be at least 2");
  if (audio_samples < 1 || sample_rate == 0) throw ArgumentError("synthgen: empty audio");
}

IdentitySpec make_identity(const SynthConfig& config, std::size_t subject_index) {
  Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(subject_index) << 20);
  IdentitySpec id;
  id.subject_id = subject_name(subject_index);
  id.latent.resize(kLatentDim);
  for (double& v : id.latent) v = rng.normal();
  for (std::size_t m = 0; m < id.noise.size(); ++m) id.noise[m] = config.noise * config.modality_noise[m];
  return id;
}

BiometricSample render_sample(const IdentitySpec& identity, const SynthConfig& config, std::size_t subject_index,
                              std::size_t sample_index) {
  if (identity.latent.size() != kLatentDim) throw ArgumentError("synthgen: latent vector has wrong length");
  Rng rng = Rng::derive(config.seed, sample_stream(subject_index, sample_index));
  BiometricSample s;
  s.subject_id = identity.subject_id;
  const auto& noise = identity.noise;
  s.face = render_face(identity.latent, config, noise[0], rng);
  // Static and dynamic signatures share the jittered control points.
  const std::vector<Point> controls = signature_controls(identity.latent, std::max(noise[1], noise[2]), rng);
  s.sig_image = render_signature(controls, config, noise[1], rng);
  s.sig_sequence = render_sequence(controls, identity.latent, config, noise[2], rng);
  s.audio = render_voice(identity.latent, config, noise[3], rng);
  return s;
}

io::Manifest gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  const std::size_t total = config.n_subjects * config.samples_per_subject;
  io::Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.records.resize(total);

  std::vector<IdentitySpec> ids(config.n_subjects);
  for (std::size_t s = 0; s < config.n_subjects; ++s) {
    ids[s] = make_identity(config, s);
    std::filesystem::create_directories(out_dir / ids[s].subject_id);
  }

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t subject = i / config.samples_per_subject;
    const std::size_t sample = i % config.samples_per_subject;
    const BiometricSample bs = render_sample(ids[subject], config, subject, sample);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%03zu", sample);
    const std::string dir = ids[subject].subject_id + "/";
    io::ManifestRecord rec;
    rec.subject_id = bs.subject_id;
    rec.face_path = dir + stem + "_face.ppm";
    rec.sig_image_path = dir + stem + "_sig.pgm";
    rec.sig_sequence_path = dir + stem + "_seq.csv";
    rec.audio_path = dir + stem + "_voice.wav";
    io::write_pnm(out_dir / rec.face_path, bs.face);
    io::write_pnm(out_dir / rec.sig_image_path, bs.sig_image);
    io::write_sequence_csv(out_dir / rec.sig_sequence_path, bs.sig_sequence);
    io::write_wav(out_dir / rec.audio_path, bs.audio);
    manifest.records[i] = std::move(rec);
  }
  io::write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

std::pair<io::Manifest, io::Manifest> gen_split(const io::Manifest& manifest, double train_fraction,
                                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("gen_split: train_fraction must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_subject[manifest.records[i].subject_id].push_back(i);
  if (by_subject.empty()) throw ArgumentError("gen_split: empty manifest");

  std::vector<bool> to_train(manifest.records.size(), false);
  std::uint64_t stream = 0;
  for (auto& [subject, idx] : by_subject) {
    if (idx.size() < 2) throw ArgumentError("gen_split: subject '" + subject + "' has fewer than 2 samples");
    Rng rng = Rng::derive(seed, stream++);
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_train; ++j) to_train[idx[j]] = true;
  }

  std::pair<io::Manifest, io::Manifest> out;
  out.first.base_dir = manifest.base_dir;
  out.second.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    (to_train[i] ? out.first : out.second).records.push_back(manifest.records[i]);
  return out;
}

}  // namespace biofuse
