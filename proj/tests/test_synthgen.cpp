#include <doctest.h>

#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "biofuse/errors.hpp"
#include "biofuse/io.hpp"
#include "biofuse/synthgen.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig small_config() {
  SynthConfig c;
  c.n_subjects = 3;
  c.samples_per_subject = 4;
  return c;
}

std::vector<double> flat(const PreprocessedSample& s) {
  std::vector<double> v;
  for (const Tensor* t : {&s.face, &s.sig_image, &s.sig_sequence, &s.audio_spectrogram})
    v.insert(v.end(), t->data().begin(), t->data().end());
  return v;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("same seed gives byte-identical files") {
  testing::TempDir a("gen_a"), b("gen_b");
  const SynthConfig c = small_config();
  const io::Manifest ma = gen_dataset(c, a.path());
  const io::Manifest mb = gen_dataset(c, b.path());
  REQUIRE(ma.records.size() == 12);
  CHECK(ma.records == mb.records);
  for (const auto& r : ma.records)
    for (const std::string& f : {r.face_path, r.sig_image_path, r.sig_sequence_path, r.audio_path})
      CHECK(slurp(a.path() / f) == slurp(b.path() / f));
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));

  SynthConfig other = c;
  other.seed = 8;
  testing::TempDir d("gen_d");
  const io::Manifest md = gen_dataset(other, d.path());
  CHECK(slurp(a.path() / ma.records[0].face_path) != slurp(d.path() / md.records[0].face_path));
}

TEST_CASE("generated files load through the datamodel") {
  testing::TempDir dir("gen_load");
  const io::Manifest m = gen_dataset(small_config(), dir.path());
  const io::Manifest back = io::read_manifest(dir / "manifest.json");
  CHECK(back.records == m.records);
  const BiometricSample s = io::load_sample(back, back.records[5]);
  CHECK(s.face.channels == 3);
  CHECK(s.sig_image.channels == 1);
  CHECK(s.sig_sequence.dim(1) == 4);
  CHECK(s.audio.samples.size() == 320);
  CHECK(s.audio.sample_rate == 16000);
  const PreprocessedSample p = preprocess(s, PreprocessConfig{});
  CHECK(p.face.all_finite());
}

TEST_CASE("rendering is independent of order and noise = 0 collapses samples") {
  SynthConfig c = small_config();
  const IdentitySpec id = make_identity(c, 1);
  CHECK(id.latent.size() == kLatentDim);
  CHECK(render_sample(id, c, 1, 3).face == render_sample(make_identity(c, 1), c, 1, 3).face);

  c.noise = 0.0;
  const IdentitySpec quiet = make_identity(c, 1);
  const BiometricSample s0 = render_sample(quiet, c, 1, 0), s1 = render_sample(quiet, c, 1, 2);
  CHECK(s0.face == s1.face);
  CHECK(s0.sig_image == s1.sig_image);
  CHECK(s0.sig_sequence == s1.sig_sequence);
  CHECK(s0.audio == s1.audio);

  const BiometricSample other = render_sample(make_identity(c, 2), c, 2, 0);
  double diff = 0.0;
  for (std::size_t i = 0; i < other.face.pixels.size(); ++i) diff += std::abs(other.face.pixels[i] - s0.face.pixels[i]);
  CHECK(diff / static_cast<double>(other.face.pixels.size()) > 0.0);
}

TEST_CASE("intra-subject distances are smaller than inter-subject distances") {
  const SynthConfig c;  // default settings
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> who;
  for (std::size_t s = 0; s < c.n_subjects; ++s) {
    const IdentitySpec id = make_identity(c, s);
    for (std::size_t k = 0; k < 8; ++k) {
      rows.push_back(flat(preprocess(render_sample(id, c, s, k), PreprocessConfig{})));
      who.push_back(s);
    }
  }
  // Probability that a random intra pair is closer than a random inter pair.
  std::vector<double> intra, inter;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) (who[i] == who[j] ? intra : inter).push_back(dist2(rows[i], rows[j]));
  double wins = 0.0;
  for (double a : intra)
    for (double b : inter) wins += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
  const double p = wins / static_cast<double>(intra.size() * inter.size());
  INFO("P(intra < inter) = " << p);
  CHECK(p > 0.5);
}

TEST_CASE("stratified split") {
  testing::TempDir dir("split");
  SynthConfig c = small_config();
  const io::Manifest m = gen_dataset(c, dir.path());
  const auto [train, eval] = gen_split(m, 0.5, 3);
  std::map<std::string, int> tr, ev;
  for (const auto& r : train.records) ++tr[r.subject_id];
  for (const auto& r : eval.records) ++ev[r.subject_id];
  CHECK(tr.size() == 3);
  for (const auto& [subject, n] : tr) {
    CHECK(n == 2);
    CHECK(ev[subject] == 2);
  }
  std::set<std::string> a, b, all;
  for (const auto& r : train.records) a.insert(r.face_path);
  for (const auto& r : eval.records) b.insert(r.face_path);
  for (const auto& r : m.records) all.insert(r.face_path);
  std::set<std::string> both = a;
  both.insert(b.begin(), b.end());
  CHECK(both == all);
  CHECK(a.size() + b.size() == all.size());

  const auto again = gen_split(m, 0.5, 3);
  CHECK(again.first.records == train.records);
  CHECK(again.second.records == eval.records);
  CHECK(train.base_dir == m.base_dir);

  // Extreme fractions still leave every subject in both halves.
  const auto lopsided = gen_split(m, 0.05, 3);
  CHECK(lopsided.first.records.size() == 3);

  CHECK_THROWS_AS(gen_split(m, 1.0, 3), ArgumentError);
  io::Manifest single = m;
  single.records.resize(1);
  CHECK_THROWS_AS(gen_split(single, 0.5, 3), ArgumentError);
  CHECK_THROWS_AS(gen_split(io::Manifest{}, 0.5, 3), ArgumentError);
}

TEST_CASE("invalid configuration") {
  SynthConfig c;
  c.n_subjects = 1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = SynthConfig{};
  c.noise = -1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = SynthConfig{};
  c.samples_per_subject = 1;
  testing::TempDir dir("bad");
  CHECK_THROWS_AS(gen_dataset(c, dir.path()), ArgumentError);
}

}  // TEST_SUITE
