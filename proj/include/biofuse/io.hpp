#pragma once

// On-disk formats of the dataset layout: binary PGM/PPM images, 16-bit PCM
// mono WAV audio, x,y,pressure,dt CSV sequences, and a JSON manifest.

#include <filesystem>
#include <string>
#include <vector>

#include "biofuse/datamodel.hpp"

namespace biofuse::io {

Image read_pnm(const std::filesystem::path& path);
/// One channel writes P5, three channels P6, both 8-bit.
void write_pnm(const std::filesystem::path& path, const Image& img);

Audio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Audio& audio);

Tensor read_sequence_csv(const std::filesystem::path& path);
void write_sequence_csv(const std::filesystem::path& path, const Tensor& seq);

struct ManifestRecord {
  std::string subject_id;
  std::string face_path;
  std::string sig_image_path;
  std::string sig_sequence_path;
  std::string audio_path;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Record paths are relative to `base_dir` unless absolute.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
std::string manifest_to_json(const Manifest& manifest);

BiometricSample load_sample(const Manifest& manifest, const ManifestRecord& record);

}  // namespace biofuse::io
