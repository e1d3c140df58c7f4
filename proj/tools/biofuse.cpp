// biofuse command line: gen-data, train, evaluate, authenticate, report.
//
// Exit codes: 0 success (or authentic), 1 not authentic, 2 any error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "biofuse/bundle.hpp"
#include "biofuse/config.hpp"
#include "biofuse/errors.hpp"
#include "biofuse/io.hpp"
#include "biofuse/metrics.hpp"
#include "biofuse/pipeline.hpp"
#include "biofuse/report.hpp"
#include "biofuse/synthgen.hpp"

namespace fs = std::filesystem;
using namespace biofuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotAuthentic = 1;
constexpr int kExitError = 2;

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("BIOFUSE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ArgumentError(std::string("BIOFUSE_SEED is not an integer: ") + v);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct GenArgs {
  std::string out;
  std::size_t subjects = 7;
  std::size_t samples = 20;
  std::optional<std::uint64_t> seed;
  double noise = SynthConfig{}.noise;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 5;
};

int run_gen(const GenArgs& a) {
  SynthConfig sc;
  sc.n_subjects = a.subjects;
  sc.samples_per_subject = a.samples;
  sc.noise = a.noise;
  if (a.seed) {
    sc.seed = *a.seed;
  } else if (auto s = env_seed()) {
    sc.seed = *s;
  }
  const io::Manifest all = gen_dataset(sc, a.out);
  const auto [train, eval] = gen_split(all, a.train_fraction, a.split_seed);
  io::write_manifest(fs::path(a.out) / "train.json", train);
  io::write_manifest(fs::path(a.out) / "eval.json", eval);
  std::printf("wrote %zu samples (%zu train, %zu eval) to %s\n", all.records.size(), train.records.size(),
              eval.records.size(), a.out.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string manifest;
  std::string eval_manifest;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string out = "model.bfm";
  std::string report;
  bool quiet = false;
};

PipelineConfig resolve_config(const TrainArgs& a) {
  PipelineConfig cfg;
  if (auto s = env_seed()) cfg.train.seed = *s;
  if (!a.config.empty()) cfg = load_config_file(a.config, cfg);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.finalize();
  return cfg;
}

int run_train(const TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig cfg = resolve_config(a);
  const LabeledDataset train = load_dataset(io::read_manifest(a.manifest), cfg.preprocess);
  std::optional<LabeledDataset> eval;
  if (!a.eval_manifest.empty()) eval = load_dataset(io::read_manifest(a.eval_manifest), cfg.preprocess, train.subjects);

  const TrainedPipeline tp = train_pipeline(train, eval ? &*eval : nullptr, cfg, [&](const EpochRecord& r) {
    if (a.quiet) return;
    std::fprintf(stderr, "epoch %zu  loss %.5f  integrated acc %.4f", r.train.epoch, r.train.train_loss,
                 r.train.train_accuracy[kModalities]);
    if (r.has_eval) std::fprintf(stderr, "  eval far %.4f frr %.4f", r.eval_far, r.eval_frr);
    std::fprintf(stderr, "\n");
  });
  save_bundle(a.out, tp.bundle);

  ExperimentReport rep;
  rep.command = "train";
  rep.config_text = canonical_config_text(tp.bundle.config);
  rep.fingerprint = to_hex(config_fingerprint(tp.bundle.config));
  rep.history = tp.history;
  if (eval) {
    rep.has_verification = true;
    rep.verification = summarize(evaluate_pairs(tp.bundle, *eval));
    rep.has_accuracy = true;
    rep.accuracy = classification_accuracy(*eval, tp.bundle.backbone);
  }
  rep.wall_time_seconds = seconds_since(t0);
  if (!a.report.empty()) write_text(a.report, report_to_json(rep));
  if (!a.quiet) std::fprintf(stderr, "saved %s\n", a.out.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string manifest;
  std::string report;
  std::string roc;
};

int run_evaluate(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineBundle bundle = load_bundle(a.model);
  const LabeledDataset data =
      load_dataset(io::read_manifest(a.manifest), bundle.config.preprocess, bundle.verifier.subjects);
  ExperimentReport rep;
  rep.command = "evaluate";
  rep.config_text = canonical_config_text(bundle.config);
  rep.fingerprint = to_hex(config_fingerprint(bundle.config));
  rep.has_verification = true;
  rep.verification = summarize(evaluate_pairs(bundle, data));
  rep.has_accuracy = true;
  rep.accuracy = classification_accuracy(data, bundle.backbone);
  rep.wall_time_seconds = seconds_since(t0);
  const std::string json = report_to_json(rep);
  if (!a.report.empty()) write_text(a.report, json);
  if (!a.roc.empty()) write_text(a.roc, roc_to_csv(rep.verification.roc));
  std::printf("FAR %.6f  FRR %.6f  EER %.6f  AUC %.6f  accuracy %.6f\n", rep.verification.far, rep.verification.frr,
              rep.verification.eer.eer, rep.verification.roc.auc, rep.verification.accuracy);
  return kExitOk;
}

struct AuthArgs {
  std::string model;
  std::string subject;
  std::string face;
  std::string sig_image;
  std::string sig_sequence;
  std::string audio;
};

int run_authenticate(const AuthArgs& a) {
  const PipelineBundle bundle = load_bundle(a.model);
  BiometricSample probe;
  probe.subject_id = a.subject;
  probe.face = io::read_pnm(a.face);
  probe.sig_image = io::read_pnm(a.sig_image);
  probe.sig_sequence = io::read_sequence_csv(a.sig_sequence);
  probe.audio = io::read_wav(a.audio);
  const AuthenticationResult r = authenticate(bundle, probe, a.subject);
  const bool ok = r.decision == Decision::authentic;
  nlohmann::ordered_json j;
  j["decision"] = ok ? "authentic" : "not_authentic";
  j["score"] = r.score;
  j["threshold"] = 0.0;
  j["subject"] = a.subject;
  std::printf("%s\n", j.dump().c_str());
  return ok ? kExitOk : kExitNotAuthentic;
}

int run_report(const std::string& input) {
  std::fputs(render_report_text(read_text(input)).c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal biometric verification: feature learning, PCA fusion, boosted-tree decisions"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset with train/eval manifests");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--subjects", gen.subjects, "Number of subjects")->capture_default_str();
  gen_cmd->add_option("--samples", gen.samples, "Samples per subject")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (falls back to BIOFUSE_SEED, then 7)");
  gen_cmd->add_option("--noise", gen.noise, "Per-sample variation scale")->capture_default_str();
  gen_cmd->add_option("--train-fraction", gen.train_fraction, "Share of each subject's samples for training")
      ->capture_default_str();
  gen_cmd->add_option("--split-seed", gen.split_seed, "Seed of the train/eval split")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the pipeline and write a model file");
  train_cmd->add_option("--manifest", tr.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--eval-manifest", tr.eval_manifest, "Held-out manifest for per-epoch FAR/FRR")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", tr.overrides, "Override a config key (key=value), repeatable");
  train_cmd->add_option("--seed", tr.seed, "Training seed (overrides config and BIOFUSE_SEED)");
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
  train_cmd->add_option("--out", tr.out, "Model file")->capture_default_str();
  train_cmd->add_option("--report", tr.report, "Report JSON path");
  train_cmd->add_flag("--quiet", tr.quiet, "No progress output");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score all probe/template pairs of a manifest");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "Evaluation manifest")->required();
  eval_cmd->add_option("--report", ev.report, "Report JSON path");
  eval_cmd->add_option("--roc", ev.roc, "ROC CSV path");

  AuthArgs au;
  auto* auth_cmd = app.add_subcommand("authenticate", "Verify one probe against an enrolled subject");
  auth_cmd->add_option("--model", au.model, "Model file")->required();
  auth_cmd->add_option("--subject", au.subject, "Claimed subject id")->required();
  auth_cmd->add_option("--face", au.face, "Face image (PPM/PGM)")->required();
  auth_cmd->add_option("--sig-image", au.sig_image, "Signature image (PGM/PPM)")->required();
  auth_cmd->add_option("--sig-seq", au.sig_sequence, "Signature sequence CSV")->required();
  auth_cmd->add_option("--audio", au.audio, "Voice WAV")->required();

  std::string report_input;
  auto* report_cmd = app.add_subcommand("report", "Print a report JSON as text");
  report_cmd->add_option("input", report_input, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_evaluate(ev);
    if (*auth_cmd) return run_authenticate(au);
    if (*report_cmd) return run_report(report_input);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
