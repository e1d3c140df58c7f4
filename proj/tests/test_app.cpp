#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

#include "biofuse/bundle.hpp"
#include "biofuse/config.hpp"
#include "biofuse/errors.hpp"
#include "biofuse/pipeline.hpp"
#include "biofuse/report.hpp"
#include "biofuse/synthgen.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

const char* kTinyConfig = R"(# small network for fast end-to-end runs
image_size = 8
conv1_channels = 2
conv2_channels = 3
refine_width = 4
hidden = 3
hidden_specific = 3
sequence_length = 8
epochs = 2
gbm_trees = 10
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

/// Synthetic dataset and a tiny trained pipeline, shared by the cases below.
struct Fixture {
  testing::TempDir dir{"app"};
  PipelineConfig config;
  LabeledDataset train, eval;
  TrainedPipeline trained;

  Fixture() {
    SynthConfig sc;
    sc.n_subjects = 3;
    sc.samples_per_subject = 6;
    const io::Manifest all = gen_dataset(sc, dir.path());
    const auto [tr, ev] = gen_split(all, 0.5, 5);
    config = parse_config_text(kTinyConfig);
    config.finalize();
    train = load_dataset(tr, config.preprocess);
    eval = load_dataset(ev, config.preprocess, train.subjects);
    trained = train_pipeline(train, &eval, config);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<double> all_scores(const PipelineBundle& b, const LabeledDataset& d) {
  std::vector<double> s;
  for (const auto& t : evaluate_pairs(b, d)) s.push_back(t.score);
  return s;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = std::string(BIOFUSE_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string text;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) text += buf;
  const int status = ::pclose(pipe);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("app") {

TEST_CASE("config text round trip and overrides") {
  PipelineConfig c;
  c.finalize();
  const std::string text = canonical_config_text(c);
  const PipelineConfig back = parse_config_text(text);
  CHECK(canonical_config_text(back) == text);
  CHECK(config_fingerprint(back) == config_fingerprint(c));
  CHECK(to_hex(config_fingerprint(c)).size() == 64);

  const auto keys = config_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(config_value(c, "learning_rate") == "0.050000000000000003");
  CHECK(config_value(c, "batch_size") == "2");

  PipelineConfig d = c;
  set_config_value(d, "gbm_shrinkage", "0.25");
  CHECK(d.gbm.shrinkage == 0.25);
  CHECK(config_fingerprint(d) != config_fingerprint(c));
  CHECK_THROWS_AS(set_config_value(d, "no_such_key", "1"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(d, "epochs", "many"), ArgumentError);

  try {
    parse_config_text("epochs = 3\n\nbogus line\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  PipelineConfig bad = parse_config_text("image_size = 30\n");
  CHECK_THROWS_AS(bad.finalize(), ConfigError);

  // SHA-256 of "abc".
  CHECK(to_hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("pipeline training produces a consistent bundle") {
  Fixture& f = fixture();
  const PipelineBundle& b = f.trained.bundle;
  CHECK(f.trained.history.size() == 2);
  CHECK(f.trained.history[0].has_eval);
  CHECK(b.verifier.subjects == f.train.subjects);
  CHECK(b.verifier.templates.dim(0) == 3);
  CHECK(b.verifier.templates.dim(1) == b.verifier.fusion.k());
  CHECK(b.verifier.gbm.feature_count == b.verifier.fusion.k());
  CHECK(b.verifier.fusion.input_dim() == integrated_dimension(b.config.network));

  const auto trials = evaluate_pairs(b, f.eval);
  CHECK(trials.size() == f.eval.samples.size() * 3);
  const VerificationSummary s = summarize(trials);
  CHECK(s.genuine_trials == f.eval.samples.size());
  CHECK(s.impostor_trials == 2 * f.eval.samples.size());

  const BiometricSample probe = io::load_sample(
      io::read_manifest(f.dir / "manifest.json"), io::read_manifest(f.dir / "manifest.json").records[0]);
  const AuthenticationResult r = authenticate(b, probe, probe.subject_id);
  CHECK((r.decision == Decision::authentic) == (r.score > 0.0));
  CHECK_THROWS_AS(authenticate(b, probe, "nobody"), ArgumentError);
  CHECK_THROWS_AS(load_dataset(io::Manifest{}, f.config.preprocess), ArgumentError);

  // Templates are per-subject means of the projected training features.
  const Tensor proj = pca_transform(select_columns(extract_features(f.train.samples, b.backbone), {}), b.verifier.fusion);
  std::vector<double> mean(proj.dim(1), 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < proj.dim(0); ++i)
    if (f.train.labels[i] == 1) {
      n += 1.0;
      for (std::size_t j = 0; j < proj.dim(1); ++j) mean[j] += proj.at(i, j);
    }
  for (std::size_t j = 0; j < proj.dim(1); ++j) CHECK(b.verifier.templates.at(1, j) == doctest::Approx(mean[j] / n).epsilon(1e-12));
}

TEST_CASE("bundle save, load and save again are byte-identical") {
  Fixture& f = fixture();
  const auto path = f.dir / "m.bfm";
  save_bundle(path, f.trained.bundle);
  const PipelineBundle loaded = load_bundle(path);
  CHECK(serialize_bundle(loaded) == slurp(path));

  const auto before = all_scores(f.trained.bundle, f.eval), after = all_scores(loaded, f.eval);
  CHECK(testing::max_abs_diff(before, after) <= 1e-12);
  CHECK(slurp(path).substr(0, 4) == "BFM1");

  // Retraining with the same seed gives the same file.
  const TrainedPipeline again = train_pipeline(f.train, nullptr, f.config);
  CHECK(serialize_bundle(again.bundle) == slurp(path));
}

TEST_CASE("corrupted model files raise distinct errors") {
  Fixture& f = fixture();
  const std::string good = serialize_bundle(f.trained.bundle);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_bundle(magic), MagicMismatchError);

  std::string version = good;
  version[4] = 2;
  CHECK_THROWS_AS(deserialize_bundle(version), UnsupportedVersionError);

  CHECK_THROWS_AS(deserialize_bundle(good.substr(0, good.size() / 2)), TruncatedFileError);
  CHECK_THROWS_AS(deserialize_bundle(good.substr(0, 5)), TruncatedFileError);

  std::string fp = good;
  fp[fp.size() - 1] ^= 0x01;
  CHECK_THROWS_AS(deserialize_bundle(fp), FingerprintMismatchError);

  // Editing the stored config without refreshing the fingerprint.
  std::string conf = good;
  const auto at = conf.find("gbm_trees = 10");
  REQUIRE(at != std::string::npos);
  conf[at + 13] = '9';
  CHECK_THROWS_AS(deserialize_bundle(conf), FingerprintMismatchError);

  testing::TempDir dir("missing");
  CHECK_THROWS_AS(load_bundle(dir / "absent.bfm"), ArgumentError);
}

TEST_CASE("report JSON carries the stable metric keys") {
  Fixture& f = fixture();
  ExperimentReport rep;
  rep.command = "train";
  rep.config_text = canonical_config_text(f.config);
  rep.fingerprint = to_hex(config_fingerprint(f.config));
  rep.history = f.trained.history;
  rep.has_verification = true;
  rep.verification = summarize(evaluate_pairs(f.trained.bundle, f.eval));
  rep.has_accuracy = true;
  rep.accuracy = classification_accuracy(f.eval, f.trained.bundle.backbone);
  const std::string text = report_to_json(rep);
  const auto j = nlohmann::json::parse(text);
  CHECK(j["command"] == "train");
  CHECK(j["epochs"].size() == 2);
  CHECK(j["accuracy"].size() == 5);
  for (const auto& name : readout_names()) CHECK(j["accuracy"].contains(name));
  for (const char* key : {"far", "frr", "eer", "auc", "far_frr_table"}) CHECK(j["verification"].contains(key));
  CHECK(j["config"]["gbm_trees"] == 10);
  const std::string rendered = render_report_text(text);
  CHECK(rendered.find("integrated") != std::string::npos);
  CHECK_THROWS(render_report_text("{not json"));
}

TEST_CASE("command line contract") {
  testing::TempDir dir("cli");
  const std::string d = dir.path().string();
  CHECK(run_cli("gen-data --out " + d + "/data --subjects 3 --samples 6 --seed 3") == 0);
  spit(dir / "tiny.cfg", kTinyConfig);
  for (const char* name : {"a", "b"})
    CHECK(run_cli("train --quiet --manifest " + d + "/data/train.json --eval-manifest " + d +
                  "/data/eval.json --config " + d + "/tiny.cfg --seed 4 --out " + d + "/" + name +
                  ".bfm --report " + d + "/" + name + ".json") == 0);
  CHECK(slurp(dir / "a.bfm") == slurp(dir / "b.bfm"));
  CHECK(nlohmann::json::parse(slurp(dir / "a.json"))["accuracy"].size() == 5);

  std::string out;
  CHECK(run_cli("evaluate --model " + d + "/a.bfm --manifest " + d + "/data/eval.json --roc " + d + "/roc.csv", &out) ==
        0);
  CHECK(out.find("EER") != std::string::npos);
  CHECK(run_cli("report " + d + "/a.json", &out) == 0);

  const io::Manifest m = io::read_manifest(dir / "data/eval.json");
  const auto& r = m.records[0];
  const std::string probe = " --face " + (m.base_dir / r.face_path).string() + " --sig-image " +
                            (m.base_dir / r.sig_image_path).string() + " --sig-seq " +
                            (m.base_dir / r.sig_sequence_path).string() + " --audio " +
                            (m.base_dir / r.audio_path).string();
  const int code = run_cli("authenticate --model " + d + "/a.bfm --subject " + r.subject_id + probe, &out);
  CHECK((code == 0 || code == 1));
  const auto j = nlohmann::json::parse(out);
  CHECK(j["decision"] == (code == 0 ? "authentic" : "not_authentic"));
  CHECK(j["threshold"] == 0.0);
  CHECK(j["subject"] == r.subject_id);

  CHECK(run_cli("authenticate --model " + d + "/a.bfm --subject nobody" + probe) == 2);
  CHECK(run_cli("authenticate --model " + d + "/missing.bfm --subject " + r.subject_id + probe) == 2);
  CHECK(run_cli("evaluate --model " + d + "/a.bfm --manifest " + d + "/nothing.json") == 2);
  CHECK(run_cli("train --manifest " + d + "/data/train.json --set epochs") == 2);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("") == 2);
}

}  // TEST_SUITE
