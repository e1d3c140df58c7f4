#include <doctest.h>

#include "biofuse/io.hpp"
#include "biofuse/pipeline.hpp"
#include "biofuse/synthgen.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

/// Default desk configuration trained on the default synthetic dataset.
struct Desk {
  testing::TempDir dir{"desk"};
  io::Manifest train_manifest;
  PipelineConfig config;
  LabeledDataset train;
  PipelineBundle bundle;

  Desk() {
    const io::Manifest all = gen_dataset(SynthConfig{}, dir.path());
    config.finalize();
    train_manifest = gen_split(all, config.train_fraction, config.split_seed).first;
    train = load_dataset(train_manifest, config.preprocess);
    bundle = train_pipeline(train, nullptr, config).bundle;
  }
};

Desk& desk() {
  static Desk d;
  return d;
}

}  // namespace

TEST_SUITE("desk") {
  TEST_CASE("converged desk model separates its own training set") {
    const VerificationSummary s = summarize(evaluate_pairs(desk().bundle, desk().train));
    CHECK(s.eer.eer < 0.05);
    CHECK(s.roc.auc > 0.95);
  }

  TEST_CASE("training probe of the claimed subject is authentic") {
    const Desk& d = desk();
    const io::ManifestRecord& rec = d.train_manifest.records.front();
    const AuthenticationResult r = authenticate(d.bundle, io::load_sample(d.train_manifest, rec), rec.subject_id);
    CHECK(r.decision == Decision::authentic);
    CHECK(r.score > 0.0);
  }

  TEST_CASE("noise-free probe claiming another subject is rejected") {
    const Desk& d = desk();
    SynthConfig clean;
    clean.noise = 0.0;
    const BiometricSample probe = render_sample(make_identity(clean, 0), clean, 0, 0);
    REQUIRE(probe.subject_id == d.train.subjects[0]);
    for (std::size_t other = 1; other < d.train.subjects.size(); ++other) {
      CAPTURE(other);
      CHECK(authenticate(d.bundle, probe, d.train.subjects[other]).decision == Decision::not_authentic);
    }
  }
}
