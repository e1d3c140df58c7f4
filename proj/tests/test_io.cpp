#include <doctest.h>

#include <cmath>
#include <fstream>

#include "biofuse/errors.hpp"
#include "biofuse/io.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("PNM round trip is exact on 8-bit levels") {
  testing::TempDir dir("pnm");
  Rng rng(5);
  for (std::size_t channels : {1u, 3u}) {
    Image img(7, 11, channels);
    for (double& v : img.pixels) v = static_cast<double>(rng.index(256)) / 255.0;
    const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
    io::write_pnm(path, img);
    const Image back = io::read_pnm(path);
    CHECK(back.height == 7);
    CHECK(back.width == 11);
    CHECK(back.channels == channels);
    CHECK(testing::max_abs_diff(img.pixels, back.pixels) <= 1e-12);
  }
  CHECK_THROWS_AS(io::write_pnm(dir / "b.pnm", Image(2, 2, 2)), ArgumentError);
}

TEST_CASE("PNM header comments and malformed input") {
  testing::TempDir dir("pnm_bad");
  write_text(dir / "c.pgm", std::string("P5\n# comment\n2 1\n255\n") + '\x00' + '\xff');
  const Image img = io::read_pnm(dir / "c.pgm");
  CHECK(img.pixels == std::vector<double>{0.0, 1.0});

  write_text(dir / "ascii.pgm", "P2\n2 1\n255\n0 255\n");
  CHECK_THROWS_AS(io::read_pnm(dir / "ascii.pgm"), ParseError);
  write_text(dir / "short.pgm", std::string("P5\n4 4\n255\n") + "abc");
  CHECK_THROWS_AS(io::read_pnm(dir / "short.pgm"), ParseError);
  CHECK_THROWS_AS(io::read_pnm(dir / "missing.pgm"), ArgumentError);
}

TEST_CASE("WAV round trip within one quantization step") {
  testing::TempDir dir("wav");
  Rng rng(6);
  Audio a;
  a.sample_rate = 8000;
  a.samples.resize(257);
  for (double& v : a.samples) v = rng.uniform(-1, 1);
  io::write_wav(dir / "a.wav", a);
  const Audio b = io::read_wav(dir / "a.wav");
  CHECK(b.sample_rate == 8000);
  REQUIRE(b.samples.size() == a.samples.size());
  CHECK(testing::max_abs_diff(a.samples, b.samples) <= 0.5 / 32767.0 + 1e-12);

  write_text(dir / "bad.wav", "RIFX0000WAVE");
  CHECK_THROWS_AS(io::read_wav(dir / "bad.wav"), ParseError);
}

TEST_CASE("sequence CSV") {
  testing::TempDir dir("csv");
  Tensor seq(Shape{3, 4}, std::vector<double>{0.1, -2, 0.5, 0.01, 1e-9, 3.25, 1, 0.02, 7, 8, 0, 0.5});
  io::write_sequence_csv(dir / "s.csv", seq);
  CHECK(io::read_sequence_csv(dir / "s.csv") == seq);

  write_text(dir / "hdr.csv", "a,b,c,d\n1,2,3,4\n");
  CHECK_THROWS_AS(io::read_sequence_csv(dir / "hdr.csv"), ParseError);
  write_text(dir / "cols.csv", "x,y,pressure,dt\n1,2,3\n");
  CHECK_THROWS_AS(io::read_sequence_csv(dir / "cols.csv"), ParseError);
  write_text(dir / "num.csv", "x,y,pressure,dt\n1,2,3,4\n1,2,zz,4\n");
  try {
    io::read_sequence_csv(dir / "num.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_text(dir / "empty.csv", "x,y,pressure,dt\n");
  CHECK_THROWS_AS(io::read_sequence_csv(dir / "empty.csv"), ParseError);
  CHECK_THROWS_AS(io::write_sequence_csv(dir / "w.csv", Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("manifest round trip and sample loading") {
  testing::TempDir dir("manifest");
  Image face(4, 4, 3, 128.0 / 255.0), sig(6, 6, 1, 1.0);
  sig.at(3, 3) = 0.0;
  Audio audio;
  audio.samples = {0.0, 0.5, -0.5};
  Tensor seq(Shape{2, 4}, std::vector<double>{0, 0, 1, 0, 1, 1, 1, 0.01});
  std::filesystem::create_directories(dir / "s0");
  io::write_pnm(dir / "s0/f.ppm", face);
  io::write_pnm(dir / "s0/g.pgm", sig);
  io::write_sequence_csv(dir / "s0/q.csv", seq);
  io::write_wav(dir / "s0/v.wav", audio);

  io::Manifest m;
  m.base_dir = dir.path();
  m.records.push_back({"subject_00", "s0/f.ppm", "s0/g.pgm", "s0/q.csv", "s0/v.wav"});
  io::write_manifest(dir / "manifest.json", m);
  const io::Manifest back = io::read_manifest(dir / "manifest.json");
  CHECK(back.records == m.records);
  CHECK(std::filesystem::equivalent(back.base_dir, dir.path()));

  const BiometricSample s = io::load_sample(back, back.records[0]);
  CHECK(s.subject_id == "subject_00");
  CHECK(s.face == face);
  CHECK(s.sig_image == sig);
  CHECK(s.sig_sequence == seq);
  CHECK(testing::max_abs_diff(s.audio.samples, audio.samples) <= 1.0 / 32767.0);

  write_text(dir / "broken.json", "{\n  \"records\": [\n    {\"subject_id\": 3\n");
  CHECK_THROWS_AS(io::read_manifest(dir / "broken.json"), ParseError);
  write_text(dir / "norec.json", "{}");
  CHECK_THROWS_AS(io::read_manifest(dir / "norec.json"), ParseError);
  write_text(dir / "field.json", "{\"records\": [{\"subject_id\": \"a\"}]}");
  CHECK_THROWS_AS(io::read_manifest(dir / "field.json"), ParseError);
}

}  // TEST_SUITE
