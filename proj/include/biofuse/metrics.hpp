#pragma once

// Verification metrics over scored genuine/impostor trials. A trial is
// accepted when score >= threshold.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace biofuse {

struct ScoredTrial {
  double score = 0.0;
  bool genuine = false;
};

struct ErrorRates {
  double far = 0.0;
  double frr = 0.0;
};

ErrorRates far_frr(std::span<const ScoredTrial> trials, double threshold);

struct EqualErrorRate {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Sweeps every distinct score as threshold and takes the one minimising
/// |FAR - FRR| (lowest threshold on ties); EER is the FAR/FRR midpoint there.
EqualErrorRate equal_error_rate(std::span<const ScoredTrial> trials);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) at +inf, one per distinct score, (1,1) at -inf
  double auc = 0.0;              // trapezoidal
};

RocCurve roc_curve(std::span<const ScoredTrial> trials);
/// "fpr,tpr,threshold" header plus one row per point.
std::string roc_to_csv(const RocCurve& curve);

/// Fraction of positions where predictions[i] == labels[i].
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

}  // namespace biofuse
