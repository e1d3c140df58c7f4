#include "biofuse/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("failed writing " + path.string());
}

// Skips whitespace and '#' comments in a PNM header, then reads an integer.
std::size_t pnm_header_int(const std::string& bytes, std::size_t& pos, const fs::path& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0, digits = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    ++digits;
  }
  if (digits == 0) throw ParseError("malformed PNM header in " + path.string());
  return value;
}

std::uint32_t le32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

void put_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n'));
}

}  // namespace

Image read_pnm(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("not a binary PGM/PPM file: " + path.string());
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t width = pnm_header_int(bytes, pos, path);
  const std::size_t height = pnm_header_int(bytes, pos, path);
  const std::size_t maxval = pnm_header_int(bytes, pos, path);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535)
    throw ParseError("invalid PNM extents in " + path.string());
  ++pos;  // single whitespace byte before the raster
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t count = width * height * channels;
  if (bytes.size() < pos + count * bps) throw ParseError("truncated PNM raster in " + path.string());
  Image img(height, width, channels);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t raw = bps == 1 ? static_cast<unsigned char>(bytes[pos + i])
                                     : (static_cast<std::size_t>(static_cast<unsigned char>(bytes[pos + 2 * i])) << 8) |
                                           static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    img.pixels[i] = static_cast<double>(raw) / static_cast<double>(maxval);
  }
  return img;
}

void write_pnm(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ArgumentError("write_pnm: need 1 or 3 channels");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  for (double v : img.pixels) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  write_file(path, out);
}

Audio read_wav(const fs::path& path) {
  const std::string b = read_file(path);
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    throw ParseError("not a RIFF/WAVE file: " + path.string());
  Audio audio;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::size_t len = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > b.size()) throw ParseError("truncated WAV chunk '" + id + "' in " + path.string());
    if (id == "fmt ") {
      if (len < 16) throw ParseError("short fmt chunk in " + path.string());
      if (le16(b, body) != 1) throw ParseError("WAV is not integer PCM: " + path.string());
      if (le16(b, body + 2) != 1) throw ParseError("WAV must be mono: " + path.string());
      if (le16(b, body + 14) != 16) throw ParseError("WAV must be 16-bit: " + path.string());
      audio.sample_rate = le32(b, body + 4);
      if (audio.sample_rate == 0) throw ParseError("WAV sample rate is zero: " + path.string());
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("WAV data chunk before fmt chunk: " + path.string());
      audio.samples.resize(len / 2);
      for (std::size_t i = 0; i < len / 2; ++i)
        audio.samples[i] = static_cast<double>(static_cast<std::int16_t>(le16(b, body + 2 * i))) / 32767.0;
      return audio;
    }
    pos = body + len + (len & 1);
  }
  throw ParseError("WAV file has no data chunk: " + path.string());
}

void write_wav(const fs::path& path, const Audio& audio) {
  const auto data_len = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::string out = "RIFF";
  put_le(out, 36 + data_len, 4);
  out += "WAVEfmt ";
  put_le(out, 16, 4);
  put_le(out, 1, 2);  // PCM
  put_le(out, 1, 2);  // mono
  put_le(out, audio.sample_rate, 4);
  put_le(out, audio.sample_rate * 2, 4);
  put_le(out, 2, 2);
  put_le(out, 16, 2);
  out += "data";
  put_le(out, data_len, 4);
  for (double v : audio.samples) {
    const long q = std::lround(std::clamp(v, -1.0, 1.0) * 32767.0);
    put_le(out, static_cast<std::uint32_t>(static_cast<std::uint16_t>(static_cast<std::int16_t>(q))), 2);
  }
  write_file(path, out);
}

Tensor read_sequence_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "x,y,pressure,dt")
        throw ParseError("sequence CSV header must be x,y,pressure,dt in " + path.string(), lineno);
      continue;
    }
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cell + "' in " + path.string(), lineno);
      }
      ++cols;
    }
    if (cols != kSequenceChannels)
      throw ParseError("expected 4 columns in " + path.string(), lineno);
  }
  if (values.empty()) throw ParseError("sequence CSV has no rows: " + path.string());
  const std::size_t steps = values.size() / kSequenceChannels;
  return Tensor({steps, kSequenceChannels}, std::move(values));
}

void write_sequence_csv(const fs::path& path, const Tensor& seq) {
  if (seq.rank() != 2 || seq.dim(1) != kSequenceChannels)
    throw DimensionError("write_sequence_csv: expected T x 4, got " + shape_to_string(seq.shape()));
  std::string out = "x,y,pressure,dt\n";
  for (std::size_t t = 0; t < seq.dim(0); ++t)
    for (std::size_t c = 0; c < kSequenceChannels; ++c) {
      out += format_number(seq.at(t, c));
      out += c + 1 == kSequenceChannels ? '\n' : ',';
    }
  write_file(path, out);
}

Manifest read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what(), line_of(text, e.byte));
  }
  const json& records = doc.is_array() ? doc : doc.value("records", json());
  if (!records.is_array()) throw ParseError("manifest " + path.string() + " has no records array");
  Manifest m;
  m.base_dir = path.parent_path();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& r = records[i];
    ManifestRecord rec;
    try {
      rec.subject_id = r.at("subject_id").get<std::string>();
      rec.face_path = r.at("face_path").get<std::string>();
      rec.sig_image_path = r.at("sig_image_path").get<std::string>();
      rec.sig_sequence_path = r.at("sig_sequence_path").get<std::string>();
      rec.audio_path = r.at("audio_path").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("manifest " + path.string() + " record " + std::to_string(i) + ": " + e.what());
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

std::string manifest_to_json(const Manifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records)
    records.push_back({{"subject_id", r.subject_id},
                       {"face_path", r.face_path},
                       {"sig_image_path", r.sig_image_path},
                       {"sig_sequence_path", r.sig_sequence_path},
                       {"audio_path", r.audio_path}});
  json doc = {{"format", "biofuse-manifest"}, {"version", 1}, {"records", records}};
  return doc.dump(2) + "\n";
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  write_file(path, manifest_to_json(manifest));
}

BiometricSample load_sample(const Manifest& manifest, const ManifestRecord& record) {
  auto resolve = [&](const std::string& p) {
    const fs::path rel(p);
    return rel.is_absolute() ? rel : manifest.base_dir / rel;
  };
  BiometricSample s;
  s.subject_id = record.subject_id;
  s.face = read_pnm(resolve(record.face_path));
  s.sig_image = read_pnm(resolve(record.sig_image_path));
  s.sig_sequence = read_sequence_csv(resolve(record.sig_sequence_path));
  s.audio = read_wav(resolve(record.audio_path));
  return s;
}

}  // namespace biofuse::io
