#include "biofuse/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse {

namespace {

constexpr char kMagic[4] = {'B', 'F', 'M', '1'};

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  void raw(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  void section(const char tag[4], const Writer& payload) {
    raw(tag, 4);
    uint<std::uint64_t>(payload.bytes_.size());
    bytes_ += payload.bytes_;
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw TruncatedFileError("model file truncated");
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  /// Count read from the file, bounded by the bytes that remain.
  std::size_t count(std::size_t element_size) {
    const auto n = uint<std::uint64_t>();
    if (element_size > 0 && n > (size_ - pos_) / element_size) throw TruncatedFileError("model file truncated");
    return static_cast<std::size_t>(n);
  }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  Reader sub(std::size_t n) {
    need(n);
    Reader r(data_ + pos_, n);
    pos_ += n;
    return r;
  }
  std::string rest() { return str(size_ - pos_); }
  bool done() const { return pos_ == size_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const Tensor& t) {
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.uint<std::uint64_t>(d);
  w.f64s(t.data());
}

Tensor read_tensor(Reader& r) {
  const auto rank = r.uint<std::uint32_t>();
  if (rank == 0 || rank > 8) throw ConfigError("model file: invalid tensor rank");
  Shape shape(rank);
  std::size_t total = 1;
  for (std::size_t& d : shape) {
    d = r.count(0);
    if (d == 0) throw ConfigError("model file: zero tensor extent");
    total *= d;
  }
  r.need(total * 8);
  return Tensor(shape, r.f64s(total));
}

Reader expect_section(Reader& r, const char tag[4]) {
  const std::string got = r.str(4);
  if (std::memcmp(got.data(), tag, 4) != 0)
    throw FormatError("model file: expected section " + std::string(tag, 4) + ", found " + got);
  const std::size_t len = r.count(1);
  return r.sub(len);
}

void finish(const Reader& r, const char* what) {
  if (!r.done()) throw FormatError(std::string("model file: trailing bytes in section ") + what);
}

}  // namespace

std::string serialize_bundle(const PipelineBundle& bundle) {
  Writer out;
  out.raw(kMagic, 4);
  out.uint<std::uint16_t>(kBundleVersion);

  const std::string config_text = canonical_config_text(bundle.config);
  Writer conf;
  conf.raw(config_text.data(), config_text.size());
  out.section("CONF", conf);

  Writer bkbn;
  const auto params = bundle.backbone.parameters();
  bkbn.uint<std::uint64_t>(params.size());
  for (const Tensor* t : params) write_tensor(bkbn, *t);
  out.section("BKBN", bkbn);

  const FusionModel& f = bundle.verifier.fusion;
  Writer fusn;
  fusn.uint<std::uint64_t>(f.input_dim());
  fusn.uint<std::uint64_t>(f.k());
  fusn.f64s(f.mean);
  fusn.f64s(f.components.data());
  fusn.f64s(f.eigenvalues);
  fusn.f64(f.total_variance);
  out.section("FUSN", fusn);

  const GbmModel& g = bundle.verifier.gbm;
  Writer gbmt;
  gbmt.f64(g.initial);
  gbmt.f64(g.shrinkage);
  gbmt.uint<std::uint64_t>(g.feature_count);
  gbmt.uint<std::uint64_t>(g.trees.size());
  for (const RegressionTree& tree : g.trees) {
    gbmt.uint<std::uint64_t>(tree.nodes().size());
    for (const TreeNode& n : tree.nodes()) {
      gbmt.i32(n.feature);
      gbmt.f64(n.threshold);
      gbmt.i32(n.left);
      gbmt.i32(n.right);
      gbmt.f64(n.value);
    }
  }
  out.section("GBMT", gbmt);

  const Verifier& v = bundle.verifier;
  Writer tmpl;
  tmpl.uint<std::uint64_t>(v.feature_indices.size());
  for (std::size_t c : v.feature_indices) tmpl.uint<std::uint64_t>(c);
  tmpl.uint<std::uint64_t>(v.subjects.size());
  for (const std::string& s : v.subjects) {
    tmpl.uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    tmpl.raw(s.data(), s.size());
  }
  tmpl.uint<std::uint64_t>(f.k());
  tmpl.f64s(v.templates.data());
  out.section("TMPL", tmpl);

  const Fingerprint digest = sha256(config_text);
  Writer fprt;
  fprt.raw(digest.data(), digest.size());
  out.section("FPRT", fprt);
  return out.bytes();
}

PipelineBundle deserialize_bundle(const std::string& bytes) {
  Reader r(bytes.data(), bytes.size());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw MagicMismatchError("model file: bad magic, expected BFM1");
  r.str(4);
  const auto version = r.uint<std::uint16_t>();
  if (version != kBundleVersion)
    throw UnsupportedVersionError("model file: unsupported format version " + std::to_string(version));

  PipelineBundle b;
  Reader conf = expect_section(r, "CONF");
  const std::string config_text = conf.rest();

  Reader bkbn = expect_section(r, "BKBN");
  Reader fusn = expect_section(r, "FUSN");
  Reader gbmt = expect_section(r, "GBMT");
  Reader tmpl = expect_section(r, "TMPL");
  Reader fprt = expect_section(r, "FPRT");
  if (!r.done()) throw FormatError("model file: trailing bytes after last section");

  const std::string digest = fprt.str(32);
  finish(fprt, "FPRT");
  const Fingerprint expected = sha256(config_text);
  if (std::memcmp(digest.data(), expected.data(), expected.size()) != 0)
    throw FingerprintMismatchError("model file: config fingerprint mismatch");

  b.config = parse_config_text(config_text, PipelineConfig{});
  b.config.finalize();
  if (canonical_config_text(b.config) != config_text) throw FormatError("model file: config text is not canonical");

  b.backbone = BackboneModel::zeros(b.config.network);
  auto params = b.backbone.parameters();
  if (bkbn.count(12) != params.size()) throw ConfigError("model file: backbone tensor count does not match config");
  for (Tensor* p : params) {
    Tensor t = read_tensor(bkbn);
    if (t.shape() != p->shape())
      throw ConfigError("model file: backbone tensor " + shape_to_string(t.shape()) + " where config implies " +
                        shape_to_string(p->shape()));
    *p = std::move(t);
  }
  finish(bkbn, "BKBN");

  FusionModel& f = b.verifier.fusion;
  const std::size_t d = fusn.count(8);
  const std::size_t k = fusn.count(8);
  if (k == 0 || k > d) throw ConfigError("model file: invalid PCA dimensions");
  f.mean = fusn.f64s(d);
  fusn.need(d * k * 8);
  f.components = Tensor(Shape{d, k}, fusn.f64s(d * k));
  f.eigenvalues = fusn.f64s(k);
  f.total_variance = fusn.f64();
  finish(fusn, "FUSN");

  GbmModel& g = b.verifier.gbm;
  g.initial = gbmt.f64();
  g.shrinkage = gbmt.f64();
  g.feature_count = gbmt.count(0);
  const std::size_t n_trees = gbmt.count(8);
  g.trees.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::vector<TreeNode> nodes(gbmt.count(28));
    for (TreeNode& n : nodes) {
      n.feature = gbmt.i32();
      n.threshold = gbmt.f64();
      n.left = gbmt.i32();
      n.right = gbmt.i32();
      n.value = gbmt.f64();
      const auto bad = [&](std::int32_t c) { return c < 0 || static_cast<std::size_t>(c) >= nodes.size(); };
      if (n.feature >= 0 && (static_cast<std::size_t>(n.feature) >= k || bad(n.left) || bad(n.right)))
        throw ConfigError("model file: malformed tree node");
    }
    g.trees.emplace_back(std::move(nodes));
  }
  finish(gbmt, "GBMT");

  Verifier& v = b.verifier;
  const std::size_t n_idx = tmpl.count(8);
  v.feature_indices.resize(n_idx);
  for (std::size_t& c : v.feature_indices) c = tmpl.uint<std::uint64_t>();
  const std::size_t n_subjects = tmpl.count(4);
  for (std::size_t s = 0; s < n_subjects; ++s) v.subjects.push_back(tmpl.str(tmpl.uint<std::uint32_t>()));
  if (tmpl.count(0) != k) throw ConfigError("model file: template width does not match PCA k");
  tmpl.need(n_subjects * k * 8);
  if (n_subjects < 2) throw ConfigError("model file: fewer than 2 enrolled subjects");
  v.templates = Tensor(Shape{n_subjects, k}, tmpl.f64s(n_subjects * k));
  finish(tmpl, "TMPL");

  const std::size_t integrated = integrated_dimension(b.config.network);
  const std::size_t expected_d = v.feature_indices.empty() ? integrated : v.feature_indices.size();
  if (d != expected_d) throw ConfigError("model file: PCA input dimension does not match the backbone");
  for (std::size_t c : v.feature_indices)
    if (c >= integrated) throw ConfigError("model file: feature index out of range");
  if (g.feature_count != k) throw ConfigError("model file: GBM feature count does not match PCA k");
  return b;
}

void save_bundle(const std::filesystem::path& path, const PipelineBundle& bundle) {
  const std::string bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing model file " + path.string());
}

PipelineBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_bundle(ss.str());
}

}  // namespace biofuse
