#include "biofuse/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ArgumentError("config: '" + key + "' expects a non-negative integer, got '" + text + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v))
    throw ArgumentError("config: '" + key + "' expects a finite number, got '" + text + "'");
  return v;
}

struct Field {
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(T PipelineConfig::*group, std::size_t T::*member) {
  return {[=](const PipelineConfig& c) { return std::to_string(c.*group.*member); },
          [=](PipelineConfig& c, const std::string& v) { c.*group.*member = parse_unsigned<std::size_t>("", v); }};
}

Field size_field(std::size_t PipelineConfig::*member) {
  return {[=](const PipelineConfig& c) { return std::to_string(c.*member); },
          [=](PipelineConfig& c, const std::string& v) { c.*member = parse_unsigned<std::size_t>("", v); }};
}

Field seed_field(std::uint64_t PipelineConfig::*member) {
  return {[=](const PipelineConfig& c) { return std::to_string(c.*member); },
          [=](PipelineConfig& c, const std::string& v) { c.*member = parse_unsigned<std::uint64_t>("", v); }};
}

Field loss_weight_field(Modality m) {
  const auto i = static_cast<std::size_t>(m);
  return {[=](const PipelineConfig& c) { return format_double(c.network.loss_weights[i]); },
          [=](PipelineConfig& c, const std::string& v) { c.network.loss_weights[i] = parse_double("", v); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["image_size"] = {[](const PipelineConfig& c) { return std::to_string(c.network.image_size); },
                       [](PipelineConfig& c, const std::string& v) {
                         c.network.image_size = parse_unsigned<std::size_t>("", v);
                         c.preprocess.image_size = c.network.image_size;
                       }};
    f["conv1_channels"] = size_field(&PipelineConfig::network, &NetworkConfig::conv1_channels);
    f["conv2_channels"] = size_field(&PipelineConfig::network, &NetworkConfig::conv2_channels);
    f["kernel_size"] = size_field(&PipelineConfig::network, &NetworkConfig::kernel_size);
    f["refine_width"] = size_field(&PipelineConfig::network, &NetworkConfig::refine_width);
    f["hidden"] = size_field(&PipelineConfig::network, &NetworkConfig::hidden);
    f["hidden_specific"] = size_field(&PipelineConfig::network, &NetworkConfig::hidden_specific);
    f["n_classes"] = size_field(&PipelineConfig::network, &NetworkConfig::n_classes);
    for (Modality m : kAllModalities) f["loss_weight_" + std::string(modality_name(m))] = loss_weight_field(m);
    f["sequence_length"] = size_field(&PipelineConfig::preprocess, &PreprocessConfig::sequence_length);
    f["audio_length"] = size_field(&PipelineConfig::preprocess, &PreprocessConfig::audio_length);
    f["spectrogram_window"] = size_field(&PipelineConfig::preprocess, &PreprocessConfig::spectrogram_window);
    f["spectrogram_hop"] = size_field(&PipelineConfig::preprocess, &PreprocessConfig::spectrogram_hop);
    f["epochs"] = size_field(&PipelineConfig::train, &TrainConfig::epochs);
    f["batch_size"] = size_field(&PipelineConfig::train, &TrainConfig::batch_size);
    f["learning_rate"] = {[](const PipelineConfig& c) { return format_double(c.train.learning_rate); },
                          [](PipelineConfig& c, const std::string& v) { c.train.learning_rate = parse_double("", v); }};
    f["seed"] = {[](const PipelineConfig& c) { return std::to_string(c.train.seed); },
                 [](PipelineConfig& c, const std::string& v) { c.train.seed = parse_unsigned<std::uint64_t>("", v); }};
    f["pca_components"] = size_field(&PipelineConfig::pca_components);
    f["gbm_trees"] = size_field(&PipelineConfig::gbm, &GbmConfig::trees);
    f["gbm_max_depth"] = size_field(&PipelineConfig::gbm, &GbmConfig::max_depth);
    f["gbm_min_leaf"] = size_field(&PipelineConfig::gbm, &GbmConfig::min_leaf);
    f["gbm_shrinkage"] = {[](const PipelineConfig& c) { return format_double(c.gbm.shrinkage); },
                          [](PipelineConfig& c, const std::string& v) { c.gbm.shrinkage = parse_double("", v); }};
    f["impostors_per_genuine"] = size_field(&PipelineConfig::impostors_per_genuine);
    f["pair_seed"] = seed_field(&PipelineConfig::pair_seed);
    f["split_seed"] = seed_field(&PipelineConfig::split_seed);
    f["train_fraction"] = {[](const PipelineConfig& c) { return format_double(c.train_fraction); },
                           [](PipelineConfig& c, const std::string& v) { c.train_fraction = parse_double("", v); }};
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void PipelineConfig::finalize() {
  preprocess.image_size = network.image_size;
  network.spectrogram_bins = preprocess.spectrogram_bins();
  network.sequence_channels = kSequenceChannels;
  network.validate();
  preprocess.validate();
  if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (gbm.trees == 0) throw ConfigError("gbm_trees must be positive");
  if (!(gbm.shrinkage > 0.0 && gbm.shrinkage <= 1.0)) throw ConfigError("gbm_shrinkage must lie in (0, 1]");
  if (gbm.min_leaf == 0) throw ConfigError("gbm_min_leaf must be positive");
  if (impostors_per_genuine == 0) throw ConfigError("impostors_per_genuine must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

std::string config_value(const PipelineConfig& config, const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ArgumentError("config: unknown key '" + key + "'");
  return it->second.get(config);
}

void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ArgumentError("config: unknown key '" + key + "'");
  try {
    it->second.set(config, value);
  } catch (const ArgumentError&) {
    throw ArgumentError("config: invalid value '" + value + "' for '" + key + "'");
  }
}

std::string canonical_config_text(const PipelineConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

PipelineConfig parse_config_text(const std::string& text, PipelineConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key = value", static_cast<int>(number));
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ArgumentError& e) {
      throw ParseError(e.what(), static_cast<int>(number));
    }
  }
  return base;
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

Fingerprint sha256(const std::string& bytes) {
  Fingerprint out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
    throw Error("sha256: digest failed");
  return out;
}

Fingerprint config_fingerprint(const PipelineConfig& config) { return sha256(canonical_config_text(config)); }

std::string to_hex(const Fingerprint& digest) {
  static const char* kDigits = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : digest) {
    s += kDigits[b >> 4];
    s += kDigits[b & 15];
  }
  return s;
}

}  // namespace biofuse
