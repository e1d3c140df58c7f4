#pragma once

// BFM1 model files. Layout, all integers and doubles little-endian:
//
//   "BFM1"  u16 version
//   repeated sections: 4-byte tag, u64 payload length, payload
//     CONF  canonical config text
//     BKBN  u64 tensor count, then per tensor: u32 rank, u64 dims, f64 values
//     FUSN  u64 D, u64 k, f64 mean[D], components[D*k], eigenvalues[k], total variance
//     GBMT  f64 initial, f64 shrinkage, u64 features, u64 trees,
//           per tree u64 nodes, per node i32 feature, f64 threshold, i32 left, i32 right, f64 value
//     TMPL  u64 feature indices + u64 values, u64 subjects + (u32 length, bytes) each,
//           u64 k, f64 templates[subjects*k]
//     FPRT  32-byte SHA-256 of the CONF text

#include <cstdint>
#include <filesystem>
#include <string>

#include "biofuse/pipeline.hpp"

namespace biofuse {

inline constexpr std::uint16_t kBundleVersion = 1;

std::string serialize_bundle(const PipelineBundle& bundle);
/// Throws MagicMismatchError, TruncatedFileError, UnsupportedVersionError,
/// FingerprintMismatchError, or ConfigError for inconsistent dimensions.
PipelineBundle deserialize_bundle(const std::string& bytes);

void save_bundle(const std::filesystem::path& path, const PipelineBundle& bundle);
PipelineBundle load_bundle(const std::filesystem::path& path);

}  // namespace biofuse
