#include "biofuse/pipeline.hpp"

#include <algorithm>
#include <map>

#include "biofuse/errors.hpp"
#include "biofuse/random.hpp"

namespace biofuse {

namespace {

std::vector<PreprocessedSample> load_samples(const io::Manifest& manifest, const PreprocessConfig& preprocess) {
  if (manifest.records.empty()) throw ArgumentError("dataset: manifest has no records");
  std::vector<PreprocessedSample> samples(manifest.records.size());
  std::vector<std::string> errors(manifest.records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      samples[i] = biofuse::preprocess(io::load_sample(manifest, manifest.records[i]), preprocess);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) throw ArgumentError("dataset: " + e);
  return samples;
}

}  // namespace

LabeledDataset load_dataset(const io::Manifest& manifest, const PreprocessConfig& preprocess) {
  return make_labeled(load_samples(manifest, preprocess));
}

LabeledDataset load_dataset(const io::Manifest& manifest, const PreprocessConfig& preprocess,
                            std::vector<std::string> subjects) {
  return make_labeled(load_samples(manifest, preprocess), std::move(subjects));
}

Tensor select_columns(const Tensor& features, std::span<const std::size_t> columns) {
  if (features.rank() != 2) throw DimensionError("select_columns: expected a matrix, got " + shape_to_string(features.shape()));
  if (columns.empty()) return features;
  const std::size_t n = features.dim(0);
  const std::size_t d = features.dim(1);
  Tensor out(Shape{n, columns.size()});
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] >= d) throw IndexError("select_columns: column out of range");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < columns.size(); ++j) out.at(i, j) = features.at(i, columns[j]);
  return out;
}

std::vector<double> pair_feature(std::span<const double> projected, std::span<const double> templ) {
  if (projected.size() != templ.size())
    throw DimensionError("pair_feature: lengths " + std::to_string(projected.size()) + " and " +
                         std::to_string(templ.size()));
  std::vector<double> out(projected.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(projected[i] - templ[i]);
  return out;
}

Verifier fit_verifier(const Tensor& features, std::span<const std::size_t> labels,
                      std::vector<std::string> subjects, const PipelineConfig& config,
                      std::vector<std::size_t> feature_indices) {
  if (features.rank() != 2 || features.dim(0) != labels.size())
    throw DimensionError("fit_verifier: " + shape_to_string(features.shape()) + " features for " +
                         std::to_string(labels.size()) + " labels");
  const std::size_t n_subjects = subjects.size();
  if (n_subjects < 2) throw ConfigError("fit_verifier: need at least 2 subjects");
  for (std::size_t y : labels)
    if (y >= n_subjects) throw IndexError("fit_verifier: label out of range");

  Verifier v;
  v.feature_indices = std::move(feature_indices);
  v.subjects = std::move(subjects);
  const Tensor selected = select_columns(features, v.feature_indices);
  v.fusion = pca_fit(selected, config.pca_components);
  const Tensor projected = pca_transform(selected, v.fusion);
  const std::size_t n = projected.dim(0);
  const std::size_t k = v.fusion.k();

  v.templates = Tensor(Shape{n_subjects, k});
  std::vector<std::size_t> counts(n_subjects, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++counts[labels[i]];
    for (std::size_t j = 0; j < k; ++j) v.templates.at(labels[i], j) += projected.at(i, j);
  }
  for (std::size_t s = 0; s < n_subjects; ++s) {
    if (counts[s] == 0) throw ConfigError("fit_verifier: subject '" + v.subjects[s] + "' has no training rows");
    for (std::size_t j = 0; j < k; ++j) v.templates.at(s, j) /= static_cast<double>(counts[s]);
  }

  const std::size_t impostors = std::min(config.impostors_per_genuine, n_subjects - 1);
  const std::size_t per_row = 1 + impostors;
  Tensor pairs(Shape{n * per_row, k});
  std::vector<double> targets(n * per_row);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t s = 0; s < n_subjects; ++s)
      if (s != labels[i]) others.push_back(s);
    Rng rng = Rng::derive(config.pair_seed, i);
    rng.shuffle(others);
    const auto row = projected.data().subspan(i * k, k);
    // The genuine pair uses the template without this row, as an unseen probe would.
    const std::size_t own = labels[i];
    const double m = static_cast<double>(counts[own]);
    std::vector<double> held_out(k);
    for (std::size_t j = 0; j < k; ++j)
      held_out[j] = counts[own] > 1 ? (m * v.templates.at(own, j) - row[j]) / (m - 1.0) : v.templates.at(own, j);
    for (std::size_t p = 0; p < per_row; ++p) {
      const std::vector<double> f =
          p == 0 ? pair_feature(row, held_out) : pair_feature(row, v.templates.data().subspan(others[p - 1] * k, k));
      std::copy(f.begin(), f.end(), pairs.ptr() + (i * per_row + p) * k);
      targets[i * per_row + p] = p == 0 ? 1.0 : -1.0;
    }
  }
  v.gbm = gbm_fit(pairs, targets, config.gbm);
  return v;
}

double verifier_score(const Verifier& verifier, std::span<const double> integrated, std::size_t subject) {
  if (subject >= verifier.subjects.size()) throw IndexError("verifier_score: subject index out of range");
  std::vector<double> selected;
  if (verifier.feature_indices.empty()) {
    selected.assign(integrated.begin(), integrated.end());
  } else {
    for (std::size_t c : verifier.feature_indices) {
      if (c >= integrated.size()) throw IndexError("verifier_score: feature index out of range");
      selected.push_back(integrated[c]);
    }
  }
  const std::vector<double> projected = pca_transform(selected, verifier.fusion);
  const std::size_t k = verifier.fusion.k();
  return gbm_predict(verifier.gbm, pair_feature(projected, verifier.templates.data().subspan(subject * k, k)));
}

std::vector<ScoredTrial> score_all_pairs(const Verifier& verifier, const Tensor& features,
                                         std::span<const std::size_t> labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size())
    throw DimensionError("score_all_pairs: feature rows do not match labels");
  if (labels.empty()) throw ArgumentError("score_all_pairs: no samples");
  const std::size_t n = labels.size();
  const std::size_t m = verifier.subjects.size();
  const std::size_t d = features.dim(1);
  std::vector<ScoredTrial> trials(n * m);
#pragma omp parallel for
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = features.data().subspan(i * d, d);
    for (std::size_t s = 0; s < m; ++s) trials[i * m + s] = {verifier_score(verifier, row, s), labels[i] == s};
  }
  return trials;
}

VerificationSummary summarize(std::span<const ScoredTrial> trials) {
  VerificationSummary out;
  std::size_t correct = 0;
  for (const ScoredTrial& t : trials) {
    (t.genuine ? out.genuine_trials : out.impostor_trials) += 1;
    const bool accepted = decide(t.score) == Decision::authentic;
    if (accepted == t.genuine) ++correct;
  }
  if (out.genuine_trials == 0 || out.impostor_trials == 0)
    throw ArgumentError("summarize: need genuine and impostor trials");
  out.accuracy = static_cast<double>(correct) / static_cast<double>(trials.size());
  const ErrorRates rates = far_frr(trials, 0.0);
  out.far = rates.far;
  out.frr = rates.frr;
  out.eer = equal_error_rate(trials);
  out.roc = roc_curve(trials);
  return out;
}

TrainedPipeline train_pipeline(const LabeledDataset& train, const LabeledDataset* eval, const PipelineConfig& config,
                               const EpochObserver& observer) {
  PipelineConfig cfg = config;
  cfg.finalize();
  if (eval != nullptr && eval->subjects != train.subjects)
    throw ConfigError("train_pipeline: evaluation labels use a different subject list");

  TrainedPipeline out;
  auto on_epoch = [&](const BackboneModel& model, const EpochMetrics& metrics) {
    EpochRecord rec;
    rec.train = metrics;
    if (eval != nullptr) {
      const Verifier v = fit_verifier(extract_features(train.samples, model), train.labels, train.subjects, cfg);
      const std::vector<ScoredTrial> trials = score_all_pairs(v, extract_features(eval->samples, model), eval->labels);
      const ErrorRates rates = far_frr(trials, 0.0);
      rec.has_eval = true;
      rec.eval_far = rates.far;
      rec.eval_frr = rates.frr;
    }
    out.history.push_back(rec);
    if (observer) observer(rec);
  };

  BackboneModel initial = BackboneModel::initialize(cfg.network, cfg.train.seed);
  TrainResult trained = train_backbone(std::move(initial), train, cfg.train, on_epoch);
  out.bundle.config = cfg;
  out.bundle.backbone = std::move(trained.model);
  out.bundle.verifier =
      fit_verifier(extract_features(train.samples, out.bundle.backbone), train.labels, train.subjects, cfg);
  return out;
}

PipelineBundle untrained_pipeline(const LabeledDataset& train, const PipelineConfig& config) {
  PipelineBundle b;
  b.config = config;
  b.config.finalize();
  b.backbone = BackboneModel::initialize(b.config.network, b.config.train.seed);
  b.verifier = fit_verifier(extract_features(train.samples, b.backbone), train.labels, train.subjects, b.config);
  return b;
}

std::vector<ScoredTrial> evaluate_pairs(const PipelineBundle& bundle, const LabeledDataset& data) {
  if (data.samples.empty()) throw ArgumentError("evaluate: no samples");
  if (data.subjects != bundle.verifier.subjects)
    throw ConfigError("evaluate: dataset labels use a different subject list");
  return score_all_pairs(bundle.verifier, extract_features(data.samples, bundle.backbone), data.labels);
}

AuthenticationResult authenticate(const PipelineBundle& bundle, const BiometricSample& probe,
                                  const std::string& subject_id) {
  const auto& subjects = bundle.verifier.subjects;
  const auto it = std::find(subjects.begin(), subjects.end(), subject_id);
  if (it == subjects.end()) throw ArgumentError("authenticate: unknown subject '" + subject_id + "'");
  const PreprocessedSample sample = preprocess(probe, bundle.config.preprocess);
  const IntegratedFeature f = extract_integrated(sample, bundle.backbone);
  AuthenticationResult r;
  r.score = verifier_score(bundle.verifier, f.values, static_cast<std::size_t>(it - subjects.begin()));
  r.decision = decide(r.score);
  return r;
}

}  // namespace biofuse
