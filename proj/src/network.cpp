#include "biofuse/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "biofuse/errors.hpp"
#include "biofuse/random.hpp"

namespace biofuse {

namespace {

constexpr std::size_t kImageChannels = 3;
constexpr std::size_t kPool = 2;

bool is_image(Modality m) { return m == Modality::face || m == Modality::sig_img; }

std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

const ConvBiases& cnn_biases(const SharedCnn& cnn, Modality m) {
  if (m == Modality::face) return cnn.face;
  if (m == Modality::sig_img) return cnn.sig;
  throw ArgumentError("shared CNN accepts face or sig_img, got " + std::string(modality_name(m)));
}

Tensor transposed(const Tensor& t) {
  Tensor out({t.dim(1), t.dim(0)});
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out.at(j, i) = t.at(i, j);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::face: return "face";
    case Modality::sig_img: return "sig_img";
    case Modality::sig_seq: return "sig_seq";
    case Modality::audio: return "audio";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  for (Modality m : kAllModalities)
    if (modality_name(m) == name) return m;
  throw ArgumentError("unknown modality '" + std::string(name) + "'");
}

NetworkConfig NetworkConfig::full_scale() {
  NetworkConfig c;
  c.image_size = 224;
  c.refine_width = 256;
  c.spectrogram_bins = 129;
  return c;
}

NetworkConfig NetworkConfig::desk() { return NetworkConfig{}; }

void NetworkConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0) throw ConfigError("image_size must be a positive multiple of 4");
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  for (std::size_t v : {conv1_channels, conv2_channels, refine_width, hidden, hidden_specific,
                        sequence_channels, spectrogram_bins, n_classes})
    if (v == 0) throw ConfigError("network widths must be positive");
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
  double total = 0.0;
  for (double w : loss_weights) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw ConfigError("at least one loss weight must be positive");
}

std::vector<ParameterSpec> parameter_layout(const NetworkConfig& c) {
  const std::size_t k = c.kernel_size;
  std::vector<ParameterSpec> out = {
      {"cnn.conv1.kernels", {c.conv1_channels, kImageChannels, k, k}},
      {"cnn.conv2.kernels", {c.conv2_channels, c.conv1_channels, k, k}},
      {"cnn.face.conv1.bias", {c.conv1_channels}},
      {"cnn.face.conv2.bias", {c.conv2_channels}},
      {"cnn.sig_img.conv1.bias", {c.conv1_channels}},
      {"cnn.sig_img.conv2.bias", {c.conv2_channels}},
      {"rnn.recurrent", {c.hidden, c.hidden}},
      {"rnn.sig_seq.input", {c.hidden, c.sequence_channels}},
      {"rnn.sig_seq.bias", {c.hidden}},
      {"rnn.audio.input", {c.hidden, c.spectrogram_bins}},
      {"rnn.audio.bias", {c.hidden}},
  };
  for (Modality m : kAllModalities) {
    const std::string p = std::string(modality_name(m)) + ".";
    const std::size_t in = is_image(m) ? c.flattened_size() : c.hidden;
    const std::size_t width = is_image(m) ? c.refine_width : c.hidden_specific;
    out.push_back({p + "refine.weight", {width, in}});
    out.push_back({p + "refine.bias", {width}});
    out.push_back({p + "head.weight", {c.n_classes, width}});
    out.push_back({p + "head.bias", {c.n_classes}});
  }
  return out;
}

std::size_t backbone_parameter_count(const NetworkConfig& config) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(config)) n += shape_size(p.shape);
  return n;
}

std::vector<LayerRow> image_branch_table(const NetworkConfig& c) {
  const std::size_t k = c.kernel_size, pad = k / 2;
  std::vector<LayerRow> rows;
  Shape s = {kImageChannels, c.image_size, c.image_size};
  s = ops::conv2d_output_shape(s, c.conv1_channels, k, k, 1, pad);
  rows.push_back({"Conv2d-1", s, ops::conv2d_param_count(kImageChannels, c.conv1_channels, k, k)});
  rows.push_back({"ReLU-2", s, 0});
  s = ops::maxpool2d_output_shape(s, kPool, kPool);
  rows.push_back({"MaxPool2d-3", s, 0});
  s = ops::conv2d_output_shape(s, c.conv2_channels, k, k, 1, pad);
  rows.push_back({"Conv2d-4", s, ops::conv2d_param_count(c.conv1_channels, c.conv2_channels, k, k)});
  rows.push_back({"ReLU-5", s, 0});
  s = ops::maxpool2d_output_shape(s, kPool, kPool);
  rows.push_back({"MaxPool2d-6", s, 0});
  const std::size_t flat = shape_size(s);
  rows.push_back({"Flatten-7", {flat}, 0});
  rows.push_back({"Linear-8", {c.refine_width}, ops::dense_param_count(flat, c.refine_width)});
  rows.push_back({"ReLU-9", {c.refine_width}, 0});
  rows.push_back({"Linear-10", {c.n_classes}, ops::dense_param_count(c.refine_width, c.n_classes)});
  return rows;
}

std::size_t shared_cnn_param_total(const NetworkConfig& c) {
  const auto rows = image_branch_table(c);
  return rows[0].params + rows[3].params;
}

std::size_t image_branch_param_total(const NetworkConfig& c) {
  std::size_t n = 0;
  for (const auto& r : image_branch_table(c)) n += r.params;
  return n;
}

BackboneModel::BackboneModel(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  const auto params = parameters();
  for (std::size_t i = 0; i < layout.size(); ++i) *params[i] = Tensor(layout[i].shape);
}

BackboneModel BackboneModel::zeros(const NetworkConfig& config) { return BackboneModel(config); }

BackboneModel BackboneModel::initialize(const NetworkConfig& config, std::uint64_t seed) {
  BackboneModel model(config);
  Rng rng(seed);
  for (Tensor* p : model.parameters()) {
    if (p->rank() == 1) continue;  // biases stay zero
    std::size_t fan_in = p->dim(1), fan_out = p->dim(0);
    if (p->rank() == 4) {
      const std::size_t taps = p->dim(2) * p->dim(3);
      fan_in *= taps;
      fan_out *= taps;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : p->data()) v = rng.uniform(-bound, bound);
  }
  return model;
}

std::vector<Tensor*> BackboneModel::parameters() {
  std::vector<Tensor*> out = {&cnn.conv1_kernels, &cnn.conv2_kernels, &cnn.face.conv1, &cnn.face.conv2,
                              &cnn.sig.conv1,     &cnn.sig.conv2,     &rnn.recurrent,  &rnn.input_sig,
                              &rnn.bias_sig,      &rnn.input_audio,   &rnn.bias_audio};
  for (auto& b : branches) {
    out.push_back(&b.refine.weight);
    out.push_back(&b.refine.bias);
    out.push_back(&b.head.weight);
    out.push_back(&b.head.bias);
  }
  return out;
}

std::vector<const Tensor*> BackboneModel::parameters() const {
  auto mutable_ptrs = const_cast<BackboneModel*>(this)->parameters();
  return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

std::size_t BackboneModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

Var shared_cnn_forward(Tape& tape, const SharedCnn& cnn, Var image, Modality modality) {
  const ConvBiases& b = cnn_biases(cnn, modality);
  const std::size_t pad = cnn.conv1_kernels.dim(2) / 2;
  Var x = ops::conv2d(tape, image, tape.parameter(cnn.conv1_kernels), tape.parameter(b.conv1), 1, pad);
  x = ops::activation(tape, x, ops::Activation::relu);
  x = ops::maxpool2d(tape, x, kPool, kPool);
  x = ops::conv2d(tape, x, tape.parameter(cnn.conv2_kernels), tape.parameter(b.conv2), 1, pad);
  x = ops::activation(tape, x, ops::Activation::relu);
  return ops::maxpool2d(tape, x, kPool, kPool);
}

Tensor shared_cnn_forward(const SharedCnn& cnn, const Tensor& image, Modality modality) {
  Tape tape(false);
  return tape.value(shared_cnn_forward(tape, cnn, tape.constant_ref(image), modality));
}

Var shared_rnn_forward(Tape& tape, const SharedRnn& rnn, Var sequence, Modality modality) {
  if (modality != Modality::sig_seq && modality != Modality::audio)
    throw ArgumentError("shared RNN accepts sig_seq or audio, got " + std::string(modality_name(modality)));
  const Tensor& seq = tape.value(sequence);
  if (seq.empty() || seq.rank() != 2) throw ArgumentError("shared RNN needs a non-empty T x d sequence");
  const bool sig = modality == Modality::sig_seq;
  const Tensor& wx = sig ? rnn.input_sig : rnn.input_audio;
  if (seq.dim(1) != wx.dim(1))
    throw DimensionError("shared RNN " + std::string(modality_name(modality)) + ": sequence " +
                         shape_to_string(seq.shape()) + " does not match input projection " +
                         shape_to_string(wx.shape()));
  return ops::elman(tape, sequence, tape.parameter(wx), tape.parameter(rnn.recurrent),
                    tape.parameter(sig ? rnn.bias_sig : rnn.bias_audio));
}

Tensor shared_rnn_forward(const SharedRnn& rnn, const Tensor& sequence, Modality modality) {
  Tape tape(false);
  return tape.value(shared_rnn_forward(tape, rnn, tape.constant_ref(sequence), modality));
}

Var modality_refine(Tape& tape, const BackboneModel& model, Var shared, Modality modality) {
  const DenseLayer& layer = model.branches[index_of(modality)].refine;
  const Tensor& feature = tape.value(shared);
  const bool image = is_image(modality);
  if ((image && feature.rank() != 3) || (!image && feature.rank() != 1) || feature.size() != layer.weight.dim(1))
    throw ArgumentError("modality_refine: feature " + shape_to_string(feature.shape()) + " does not belong to the " +
                        std::string(modality_name(modality)) + " branch");
  Var x = image ? ops::flatten(tape, shared) : shared;
  x = ops::dense(tape, x, tape.parameter(layer.weight), tape.parameter(layer.bias));
  return ops::activation(tape, x, image ? ops::Activation::relu : ops::Activation::tanh);
}

Tensor modality_refine(const BackboneModel& model, const Tensor& shared, Modality modality) {
  Tape tape(false);
  return tape.value(modality_refine(tape, model, tape.constant_ref(shared), modality));
}

Var modality_head(Tape& tape, const BackboneModel& model, Var refined, Modality modality) {
  const DenseLayer& head = model.branches[index_of(modality)].head;
  return ops::dense(tape, refined, tape.parameter(head.weight), tape.parameter(head.bias));
}

SampleForward forward_sample(Tape& tape, const BackboneModel& model, const PreprocessedSample& sample) {
  const auto& c = model.config();
  const Shape image_shape = {kImageChannels, c.image_size, c.image_size};
  if (sample.face.shape() != image_shape || sample.sig_image.shape() != image_shape)
    throw DimensionError("sample images " + shape_to_string(sample.face.shape()) + " / " +
                         shape_to_string(sample.sig_image.shape()) + " do not match model input " +
                         shape_to_string(image_shape));
  if (sample.audio_spectrogram.rank() != 2 || sample.audio_spectrogram.dim(0) != c.spectrogram_bins)
    throw DimensionError("spectrogram " + shape_to_string(sample.audio_spectrogram.shape()) + " does not have " +
                         std::to_string(c.spectrogram_bins) + " bins");

  SampleForward f;
  f.shared[0] = shared_cnn_forward(tape, model.cnn, tape.constant_ref(sample.face), Modality::face);
  f.shared[1] = shared_cnn_forward(tape, model.cnn, tape.constant_ref(sample.sig_image), Modality::sig_img);
  f.shared[2] = shared_rnn_forward(tape, model.rnn, tape.constant_ref(sample.sig_sequence), Modality::sig_seq);
  f.shared[3] = shared_rnn_forward(tape, model.rnn, tape.constant(transposed(sample.audio_spectrogram)),
                                   Modality::audio);
  for (Modality m : kAllModalities) {
    const std::size_t i = index_of(m);
    f.refined[i] = modality_refine(tape, model, f.shared[i], m);
    f.logits[i] = modality_head(tape, model, f.refined[i], m);
  }
  return f;
}

std::array<std::size_t, 8> integrated_component_sizes(const NetworkConfig& c) {
  return {c.conv2_channels, c.conv2_channels, c.hidden,          c.hidden,
          c.refine_width,   c.refine_width,   c.hidden_specific, c.hidden_specific};
}

std::size_t integrated_dimension(const NetworkConfig& c) {
  const auto sizes = integrated_component_sizes(c);
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

std::vector<std::size_t> modality_feature_indices(const NetworkConfig& c, Modality m) {
  const auto sizes = integrated_component_sizes(c);
  std::array<std::size_t, 9> offsets{};
  for (std::size_t i = 0; i < sizes.size(); ++i) offsets[i + 1] = offsets[i] + sizes[i];
  std::vector<std::size_t> idx;
  for (std::size_t comp : {index_of(m), index_of(m) + kModalities})
    for (std::size_t j = offsets[comp]; j < offsets[comp + 1]; ++j) idx.push_back(j);
  return idx;
}

IntegratedFeature extract_integrated(const PreprocessedSample& sample, const BackboneModel& model) {
  Tape tape(false);
  const SampleForward f = forward_sample(tape, model, sample);
  const std::array<Var, 8> parts = {ops::global_avg_pool(tape, f.shared[0]),
                                    ops::global_avg_pool(tape, f.shared[1]),
                                    f.shared[2],
                                    f.shared[3],
                                    f.refined[0],
                                    f.refined[1],
                                    f.refined[2],
                                    f.refined[3]};
  IntegratedFeature out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto d = tape.value(parts[i]).data();
    out.values.insert(out.values.end(), d.begin(), d.end());
    out.offsets[i + 1] = out.values.size();
  }
  return out;
}

Tensor extract_features(std::span<const PreprocessedSample> samples, const BackboneModel& model) {
  if (samples.empty()) throw ArgumentError("extract_features: no samples");
  const std::size_t dim = integrated_dimension(model.config());
  Tensor out({samples.size(), dim});
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
    const auto f = extract_integrated(samples[static_cast<std::size_t>(i)], model);
    std::copy(f.values.begin(), f.values.end(), out.ptr() + static_cast<std::size_t>(i) * dim);
  }
  return out;
}

LabeledDataset make_labeled(std::vector<PreprocessedSample> samples) {
  std::vector<std::string> subjects;
  for (const auto& s : samples) subjects.push_back(s.subject_id);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  return make_labeled(std::move(samples), std::move(subjects));
}

LabeledDataset make_labeled(std::vector<PreprocessedSample> samples, std::vector<std::string> subjects) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < subjects.size(); ++i) index.emplace(subjects[i], i);
  LabeledDataset d;
  for (const auto& s : samples) {
    auto it = index.find(s.subject_id);
    if (it == index.end()) throw ArgumentError("subject '" + s.subject_id + "' is not enrolled");
    d.labels.push_back(it->second);
  }
  d.samples = std::move(samples);
  d.subjects = std::move(subjects);
  return d;
}

Var joint_loss(Tape& tape, const BackboneModel& model, std::span<const PreprocessedSample* const> batch,
               std::span<const std::size_t> labels) {
  if (batch.empty()) throw ArgumentError("joint_loss: empty batch");
  if (batch.size() != labels.size()) throw ArgumentError("joint_loss: batch and label counts differ");
  const auto& w = model.config().loss_weights;
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::optional<Var> total;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (labels[b] >= model.config().n_classes)
      throw IndexError("joint_loss: label " + std::to_string(labels[b]) + " out of range for " +
                       std::to_string(model.config().n_classes) + " classes");
    const SampleForward f = forward_sample(tape, model, *batch[b]);
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (w[m] == 0.0) continue;
      Var term = ops::scale(tape, ops::softmax_cross_entropy(tape, f.logits[m], labels[b]),
                            w[m] / (wsum * static_cast<double>(batch.size())));
      total = total ? ops::add(tape, *total, term) : term;
    }
  }
  return *total;
}

double joint_loss(const BackboneModel& model, std::span<const PreprocessedSample* const> batch,
                  std::span<const std::size_t> labels) {
  Tape tape(false);
  return tape.value(joint_loss(tape, model, batch, labels))[0];
}

Readouts classify(const PreprocessedSample& sample, const BackboneModel& model) {
  Tape tape(false);
  const SampleForward f = forward_sample(tape, model, sample);
  Readouts out{};
  std::vector<double> mean(model.config().n_classes, 0.0);
  for (std::size_t m = 0; m < kModalities; ++m) {
    const Tensor& logits = tape.value(f.logits[m]);
    out[m] = argmax(logits.data());
    const Tensor p = ops::softmax(logits);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k] / static_cast<double>(kModalities);
  }
  out[kModalities] = argmax(mean);
  return out;
}

std::array<double, kReadouts> classification_accuracy(const LabeledDataset& data, const BackboneModel& model) {
  if (data.samples.empty()) throw ArgumentError("classification_accuracy: empty dataset");
  std::vector<Readouts> preds(data.samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.samples.size()); ++i)
    preds[static_cast<std::size_t>(i)] = classify(data.samples[static_cast<std::size_t>(i)], model);
  std::array<double, kReadouts> acc{};
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t r = 0; r < kReadouts; ++r) acc[r] += preds[i][r] == data.labels[i] ? 1.0 : 0.0;
  for (auto& a : acc) a /= static_cast<double>(preds.size());
  return acc;
}

TrainResult train_backbone(BackboneModel model, const LabeledDataset& data, const TrainConfig& config,
                           const EpochCallback& on_epoch) {
  if (data.subjects.size() < 2) throw ConfigError("training needs at least 2 subjects");
  if (data.subjects.size() > model.config().n_classes)
    throw ConfigError(std::to_string(data.subjects.size()) + " subjects exceed n_classes = " +
                      std::to_string(model.config().n_classes));
  std::vector<std::size_t> per_subject(data.subjects.size(), 0);
  for (std::size_t l : data.labels) ++per_subject.at(l);
  for (std::size_t i = 0; i < per_subject.size(); ++i)
    if (per_subject[i] < 2) throw ConfigError("subject '" + data.subjects[i] + "' has fewer than 2 samples");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");

  Rng rng(config.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  const auto params = model.parameters();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const PreprocessedSample*> batch;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&data.samples[order[i]]);
        labels.push_back(data.labels[order[i]]);
      }
      Tape tape;
      const Var loss = joint_loss(tape, model, batch, labels);
      tape.backward(loss);
      loss_sum += tape.value(loss)[0] * static_cast<double>(batch.size());
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(tape.grad_of(*p));
      for (std::size_t i = 0; i < params.size(); ++i) {
        double* w = params[i]->ptr();
        const double* g = grads[i].ptr();
        for (std::size_t j = 0; j < params[i]->size(); ++j) w[j] -= config.learning_rate * g[j];
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_accuracy = classification_accuracy(data, model);
    result.history.push_back(m);
    if (on_epoch) on_epoch(model, m);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace biofuse
