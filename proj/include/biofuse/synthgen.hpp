#pragma once

// Seeded generator of identity-conditioned multi-modal samples.
//
// Each subject draws a Gaussian latent vector that fixes its face pattern,
// signature control points, pen dynamics and voice tones. Every per-sample
// perturbation is multiplied by `noise`, so noise = 0 renders identical
// samples per subject. Random streams are derived from (seed, subject,
// sample), making the output independent of generation order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "biofuse/datamodel.hpp"
#include "biofuse/io.hpp"

namespace biofuse {

struct SynthConfig {
  std::size_t n_subjects = 7;
  std::size_t samples_per_subject = 20;
  std::uint64_t seed = 7;
  double noise = 1.0;
  /// Multiplies `noise` per modality: face, sig_img, sig_seq, audio.
  std::array<double, 4> modality_noise = {1.0, 1.0, 1.0, 1.0};

  std::size_t face_size = 40;
  std::size_t sig_height = 40;
  std::size_t sig_width = 72;
  std::size_t sequence_points = 48;
  std::size_t audio_samples = 320;
  unsigned sample_rate = 16000;

  void validate() const;
};

inline constexpr std::size_t kLatentDim = 32;

struct IdentitySpec {
  std::string subject_id;
  std::vector<double> latent;  // kLatentDim standard normal draws
  std::array<double, 4> noise{};  // effective per-modality scale
};

IdentitySpec make_identity(const SynthConfig& config, std::size_t subject_index);
BiometricSample render_sample(const IdentitySpec& identity, const SynthConfig& config, std::size_t subject_index,
                              std::size_t sample_index);

/// Renders every sample and writes files plus `manifest.json` under out_dir.
io::Manifest gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

/// Per-subject stratified split; each subject lands in both halves.
std::pair<io::Manifest, io::Manifest> gen_split(const io::Manifest& manifest, double train_fraction,
                                                std::uint64_t seed);

}  // namespace biofuse
