#pragma once

// Pipeline hyperparameters as one flat key=value document.
//
//   # comment
//   image_size = 32
//   learning_rate = 0.05
//
// The canonical text lists every key once, sorted, with doubles printed
// round-trip exact. Its SHA-256 is the configuration fingerprint.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "biofuse/datamodel.hpp"
#include "biofuse/gbm.hpp"
#include "biofuse/network.hpp"

namespace biofuse {

struct PipelineConfig {
  NetworkConfig network = NetworkConfig::desk();
  PreprocessConfig preprocess;
  TrainConfig train;
  std::size_t pca_components = 0;  // 0 selects by explained variance
  GbmConfig gbm;
  std::size_t impostors_per_genuine = 3;
  std::uint64_t pair_seed = 11;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 5;

  /// Keeps derived fields (network spectrogram bins, image size) in step
  /// with the preprocessing settings and validates everything.
  void finalize();
};

using Fingerprint = std::array<std::uint8_t, 32>;

std::vector<std::string> config_keys();
std::string config_value(const PipelineConfig& config, const std::string& key);
/// Throws ArgumentError for unknown keys or unparsable values.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

std::string canonical_config_text(const PipelineConfig& config);
/// Parses key=value lines onto `base`; errors carry the 1-based line number.
PipelineConfig parse_config_text(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});

Fingerprint sha256(const std::string& bytes);
Fingerprint config_fingerprint(const PipelineConfig& config);
std::string to_hex(const Fingerprint& digest);

}  // namespace biofuse
