#pragma once

// End-to-end verification pipeline:
//
//   backbone training -> integrated features of the training split -> PCA
//   -> per-subject templates (mean F_PCA) -> |F_PCA - template| pairs
//   -> boosted trees, authentic iff score > 0.

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "biofuse/config.hpp"
#include "biofuse/fusion.hpp"
#include "biofuse/gbm.hpp"
#include "biofuse/io.hpp"
#include "biofuse/metrics.hpp"
#include "biofuse/network.hpp"

namespace biofuse {

/// Loads and preprocesses every record, in parallel. With `subjects` given,
/// labels follow that list; otherwise sorted subject ids define them.
LabeledDataset load_dataset(const io::Manifest& manifest, const PreprocessConfig& preprocess);
LabeledDataset load_dataset(const io::Manifest& manifest, const PreprocessConfig& preprocess,
                            std::vector<std::string> subjects);

/// Verification stage on top of a fixed feature extractor.
struct Verifier {
  std::vector<std::size_t> feature_indices;  // columns of F_integrated used; empty means all
  FusionModel fusion;
  GbmModel gbm;
  std::vector<std::string> subjects;
  Tensor templates;  // subjects x k
};

Tensor select_columns(const Tensor& features, std::span<const std::size_t> columns);
std::vector<double> pair_feature(std::span<const double> projected, std::span<const double> templ);

/// Fits PCA, templates and boosted trees on labelled integrated features.
/// Each training row yields one genuine pair, against its subject's template
/// recomputed without that row, and `impostors_per_genuine` pairs against
/// other subjects' templates.
Verifier fit_verifier(const Tensor& features, std::span<const std::size_t> labels,
                      std::vector<std::string> subjects, const PipelineConfig& config,
                      std::vector<std::size_t> feature_indices = {});

/// Score of an integrated feature against template `subject`.
double verifier_score(const Verifier& verifier, std::span<const double> integrated, std::size_t subject);
/// Every row against every template; genuine when the labels agree.
std::vector<ScoredTrial> score_all_pairs(const Verifier& verifier, const Tensor& features,
                                         std::span<const std::size_t> labels);

struct VerificationSummary {
  std::size_t genuine_trials = 0;
  std::size_t impostor_trials = 0;
  double accuracy = 0.0;  // share of correct sign decisions
  double far = 0.0;       // at threshold 0
  double frr = 0.0;
  EqualErrorRate eer;
  RocCurve roc;
};
VerificationSummary summarize(std::span<const ScoredTrial> trials);

struct PipelineBundle {
  PipelineConfig config;
  BackboneModel backbone;
  Verifier verifier;
};

struct EpochRecord {
  EpochMetrics train;
  bool has_eval = false;
  double eval_far = 0.0;  // threshold 0, verifier refitted on this epoch's features
  double eval_frr = 0.0;
};

struct TrainedPipeline {
  PipelineBundle bundle;
  std::vector<EpochRecord> history;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Trains the backbone, then fits the verifier on the training split. With
/// `eval` given, FAR/FRR on it are recorded after every epoch.
TrainedPipeline train_pipeline(const LabeledDataset& train, const LabeledDataset* eval, const PipelineConfig& config,
                               const EpochObserver& observer = {});

/// Fits only the verifier on an untouched, freshly initialised backbone.
PipelineBundle untrained_pipeline(const LabeledDataset& train, const PipelineConfig& config);

std::vector<ScoredTrial> evaluate_pairs(const PipelineBundle& bundle, const LabeledDataset& data);

struct AuthenticationResult {
  Decision decision = Decision::not_authentic;
  double score = 0.0;
};
/// Throws ArgumentError for an unknown subject id.
AuthenticationResult authenticate(const PipelineBundle& bundle, const BiometricSample& probe,
                                  const std::string& subject_id);

}  // namespace biofuse
