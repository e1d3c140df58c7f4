#pragma once

// Experiment report: training history, final verification metrics, per-head
// classification accuracy and a config echo, serialized as JSON.

#include <array>
#include <string>
#include <vector>

#include "biofuse/pipeline.hpp"

namespace biofuse {

struct ExperimentReport {
  std::string command;  // "train" or "evaluate"
  std::string config_text;
  std::string fingerprint;
  std::vector<EpochRecord> history;
  bool has_verification = false;
  VerificationSummary verification;
  bool has_accuracy = false;
  std::array<double, kReadouts> accuracy{};  // face, sig_img, sig_seq, audio, integrated
  double wall_time_seconds = 0.0;
};

/// Readout names in report order.
std::array<std::string, kReadouts> readout_names();

std::string report_to_json(const ExperimentReport& report);
/// Plain-text rendering of a report JSON document (per-epoch table and finals).
std::string render_report_text(const std::string& json_text);

}  // namespace biofuse
