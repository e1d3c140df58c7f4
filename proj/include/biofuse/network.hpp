#pragma once

// Shared + modality-specific feature extractor.
//
//   face, sig_img  -> shared CNN (one kernel set, per-modality biases)
//                     -> flatten -> dense(refine) -> relu -> head
//   sig_seq, audio -> shared Elman RNN (one recurrent matrix, per-modality
//                     input projection and bias) -> dense(H_spec) -> tanh -> head
//
// The integrated feature concatenates, in this order: pooled face map, pooled
// signature-image map, h_T of the signature sequence, h_T of the audio, and
// the four refined vectors (face, sig_img, sig_seq, audio).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biofuse/datamodel.hpp"
#include "biofuse/ops.hpp"
#include "biofuse/tape.hpp"
#include "biofuse/tensor.hpp"

namespace biofuse {

enum class Modality { face = 0, sig_img = 1, sig_seq = 2, audio = 3 };
inline constexpr std::size_t kModalities = 4;
inline constexpr std::array<Modality, kModalities> kAllModalities = {
    Modality::face, Modality::sig_img, Modality::sig_seq, Modality::audio};

std::string_view modality_name(Modality m);
/// Throws ArgumentError for unknown names.
Modality parse_modality(std::string_view name);

struct NetworkConfig {
  std::size_t image_size = 32;
  std::size_t conv1_channels = 64;
  std::size_t conv2_channels = 128;
  std::size_t kernel_size = 3;
  std::size_t refine_width = 32;
  std::size_t hidden = 16;
  std::size_t hidden_specific = 16;
  std::size_t sequence_channels = 4;
  std::size_t spectrogram_bins = 9;
  std::size_t n_classes = 7;
  std::array<double, kModalities> loss_weights = {1.0, 1.0, 1.0, 1.0};

  /// 224 x 224 input, 256-wide image refinement, window-256 spectrogram.
  static NetworkConfig full_scale();
  static NetworkConfig desk();

  std::size_t pooled_extent() const { return image_size / 4; }
  std::size_t flattened_size() const { return conv2_channels * pooled_extent() * pooled_extent(); }
  void validate() const;
};

/// Name and shape of one trainable tensor.
struct ParameterSpec {
  std::string name;
  Shape shape;
};

/// Every backbone tensor in storage order. Shared kernels appear once.
std::vector<ParameterSpec> parameter_layout(const NetworkConfig& config);
std::size_t backbone_parameter_count(const NetworkConfig& config);

/// One row of a per-branch layer summary.
struct LayerRow {
  std::string name;
  Shape output;
  std::size_t params = 0;
};

/// The image branch as a layer table: shared conv chain, flatten, refinement
/// dense, relu, classification head. Parameter counts are per-branch views
/// (conv rows include that branch's bias).
std::vector<LayerRow> image_branch_table(const NetworkConfig& config);
std::size_t shared_cnn_param_total(const NetworkConfig& config);
std::size_t image_branch_param_total(const NetworkConfig& config);

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
};

struct ConvBiases {
  Tensor conv1;
  Tensor conv2;
};

struct SharedCnn {
  Tensor conv1_kernels;  // C1 x 3 x k x k
  Tensor conv2_kernels;  // C2 x C1 x k x k
  ConvBiases face;
  ConvBiases sig;
};

struct SharedRnn {
  Tensor recurrent;    // H x H, shared
  Tensor input_sig;    // H x 4
  Tensor input_audio;  // H x F
  Tensor bias_sig;
  Tensor bias_audio;
};

struct Branch {
  DenseLayer refine;
  DenseLayer head;
};

class BackboneModel {
 public:
  BackboneModel() = default;
  /// Scaled-uniform weights, zero biases, drawn in parameter_layout order.
  static BackboneModel initialize(const NetworkConfig& config, std::uint64_t seed);
  static BackboneModel zeros(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }

  /// Pointers into this model, in parameter_layout order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  SharedCnn cnn;
  SharedRnn rnn;
  std::array<Branch, kModalities> branches;

 private:
  explicit BackboneModel(const NetworkConfig& config);
  NetworkConfig config_;
};

/// Conv chain of the shared CNN: 3 x S x S -> C2 x S/4 x S/4.
/// Only needs the kernels and biases, so it is usable on a bare SharedCnn.
Var shared_cnn_forward(Tape& tape, const SharedCnn& cnn, Var image, Modality modality);
Tensor shared_cnn_forward(const SharedCnn& cnn, const Tensor& image, Modality modality);

/// Final hidden state h_T of the shared recurrence over a T x d sequence.
Var shared_rnn_forward(Tape& tape, const SharedRnn& rnn, Var sequence, Modality modality);
Tensor shared_rnn_forward(const SharedRnn& rnn, const Tensor& sequence, Modality modality);

/// Refined feature from the shared output (map for images, h_T for sequences).
Var modality_refine(Tape& tape, const BackboneModel& model, Var shared, Modality modality);
Tensor modality_refine(const BackboneModel& model, const Tensor& shared, Modality modality);
Var modality_head(Tape& tape, const BackboneModel& model, Var refined, Modality modality);

/// All taped intermediates of one sample.
struct SampleForward {
  std::array<Var, kModalities> shared;   // image maps / final hidden states
  std::array<Var, kModalities> refined;
  std::array<Var, kModalities> logits;
};
SampleForward forward_sample(Tape& tape, const BackboneModel& model, const PreprocessedSample& sample);

struct IntegratedFeature {
  std::vector<double> values;
  /// Component i occupies [offsets[i], offsets[i + 1]).
  std::array<std::size_t, 9> offsets{};
};

/// Lengths of the eight concatenated components.
std::array<std::size_t, 8> integrated_component_sizes(const NetworkConfig& config);
std::size_t integrated_dimension(const NetworkConfig& config);
/// Positions in F_integrated that belong to one modality (shared + specific part).
std::vector<std::size_t> modality_feature_indices(const NetworkConfig& config, Modality modality);

IntegratedFeature extract_integrated(const PreprocessedSample& sample, const BackboneModel& model);
/// Row i is the integrated feature of samples[i]. Runs samples in parallel.
Tensor extract_features(std::span<const PreprocessedSample> samples, const BackboneModel& model);

/// Samples with dense labels 0..n_subjects-1 assigned by sorted subject id.
struct LabeledDataset {
  std::vector<PreprocessedSample> samples;
  std::vector<std::size_t> labels;
  std::vector<std::string> subjects;
};
LabeledDataset make_labeled(std::vector<PreprocessedSample> samples);
/// Labels `samples` with an existing subject list; unknown ids throw ArgumentError.
LabeledDataset make_labeled(std::vector<PreprocessedSample> samples, std::vector<std::string> subjects);

/// Mean over the batch of the weighted mean of the four branch cross-entropies.
Var joint_loss(Tape& tape, const BackboneModel& model, std::span<const PreprocessedSample* const> batch,
               std::span<const std::size_t> labels);
double joint_loss(const BackboneModel& model, std::span<const PreprocessedSample* const> batch,
                  std::span<const std::size_t> labels);

/// Per-head predictions: the four branches plus the integrated readout
/// (argmax of the mean of the four softmax distributions).
inline constexpr std::size_t kReadouts = kModalities + 1;
using Readouts = std::array<std::size_t, kReadouts>;
Readouts classify(const PreprocessedSample& sample, const BackboneModel& model);
/// Accuracy of each readout against labels.
std::array<double, kReadouts> classification_accuracy(const LabeledDataset& data, const BackboneModel& model);

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 2;
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::array<double, kReadouts> train_accuracy{};
};

/// Called after every epoch with the current weights.
using EpochCallback = std::function<void(const BackboneModel&, const EpochMetrics&)>;

struct TrainResult {
  BackboneModel model;
  std::vector<EpochMetrics> history;
};

/// Mini-batch SGD on joint_loss. Deterministic for a given seed.
TrainResult train_backbone(BackboneModel model, const LabeledDataset& data, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

}  // namespace biofuse
