#include "csiloc/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <zlib.h>

#include "csiloc/error.hpp"

namespace csiloc {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'L'};

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_f64(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put(m.data()[i]);
  }
  void put_f64(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put(v[i]);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  Eigen::MatrixXd get_f64(Eigen::Index rows, Eigen::Index cols) {
    need_values(static_cast<std::uint64_t>(rows) * cols, 8);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<double>();
    return m;
  }
  Eigen::VectorXd get_f64(Eigen::Index n) {
    need_values(static_cast<std::uint64_t>(n), 8);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = get<double>();
    return v;
  }
  /// Checks up front that count values of the given width are available.
  void need_values(std::uint64_t count, std::size_t width) {
    if (width != 0 && count > remaining() / width) truncated();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void finish() const {
    require(pos_ == bytes_.size(), ErrorCode::Io,
            what_ + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) truncated();
  }
  [[noreturn]] void truncated() const {
    fail(ErrorCode::Truncated, what_ + ": unexpected end of data");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::vector<std::uint8_t>& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  std::size_t offset = 0;
  while (offset < data.size()) {
    const std::size_t chunk = std::min<std::size_t>(data.size() - offset, 1u << 30);
    crc = crc32(crc, data.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string kind_name(FileKind kind) {
  switch (kind) {
    case FileKind::Dataset: return "dataset";
    case FileKind::Model: return "model";
    case FileKind::FusionWeights: return "fusion weights";
    case FileKind::Maps: return "map exchange";
    case FileKind::MeanVariance: return "mean/variance exchange";
    case FileKind::Estimates: return "estimates";
  }
  return "unknown";
}

const Section* find_section(const std::vector<Section>& sections, const std::string& tag) {
  for (const auto& s : sections) {
    if (s.tag == tag) return &s;
  }
  return nullptr;
}

const Section& need_section(const std::vector<Section>& sections, const std::string& tag) {
  const Section* s = find_section(sections, tag);
  require(s != nullptr, ErrorCode::Io, "missing required section " + tag);
  return *s;
}

Section text_section(const std::string& tag, const std::string& text) {
  return {tag, std::vector<std::uint8_t>(text.begin(), text.end())};
}

std::string section_text(const Section& s) { return std::string(s.payload.begin(), s.payload.end()); }

Section encode_grid(const Grid& g) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(g.dims()));
  w.put(static_cast<std::uint32_t>(g.count()));
  w.put(static_cast<std::uint8_t>(g.rect() ? 1 : 0));
  if (g.rect()) {
    w.put(g.rect()->x_min);
    w.put(g.rect()->x_max);
    w.put(g.rect()->y_min);
    w.put(g.rect()->y_max);
    w.put(static_cast<std::uint32_t>(g.rect()->side_count));
  }
  w.put_f64(g.points());
  return {"GRID", w.take()};
}

Grid decode_grid(const Section& s) {
  ByteReader r(s.payload, "GRID section");
  const auto d = r.get<std::uint32_t>();
  const auto k = r.get<std::uint32_t>();
  const auto rect = r.get<std::uint8_t>();
  std::optional<RectSpec> spec;
  if (rect != 0) {
    RectSpec rs;
    rs.x_min = r.get<double>();
    rs.x_max = r.get<double>();
    rs.y_min = r.get<double>();
    rs.y_max = r.get<double>();
    rs.side_count = static_cast<int>(r.get<std::uint32_t>());
    spec = rs;
  }
  const Eigen::MatrixXd points = r.get_f64(d, k);
  r.finish();
  if (spec) {
    Grid g = Grid::rectangular(*spec);
    require(g.points() == points, ErrorCode::Io, "GRID section: points disagree with lattice");
    return g;
  }
  return Grid(points);
}

Section encode_snapshots(const std::vector<std::uint64_t>& ids) {
  ByteWriter w;
  w.put(static_cast<std::uint64_t>(ids.size()));
  for (auto id : ids) w.put(id);
  return {"TIME", w.take()};
}

std::vector<std::uint64_t> decode_snapshots(const Section& s) {
  ByteReader r(s.payload, "TIME section");
  const auto n = r.get<std::uint64_t>();
  r.need_values(n, 8);
  std::vector<std::uint64_t> ids(n);
  for (auto& id : ids) id = r.get<std::uint64_t>();
  r.finish();
  return ids;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::Io, "failed reading " + path.string());
  return bytes;
}

}  // namespace

std::vector<std::uint8_t> encode_container(FileKind kind, const std::vector<Section>& sections) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put(kFormatVersion);
  w.put(static_cast<std::uint16_t>(kind));
  w.put(static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    require(s.tag.size() == 4, ErrorCode::InvalidArgument, "section tag must be 4 bytes");
    w.put_bytes(s.tag.data(), 4);
    w.put(static_cast<std::uint64_t>(s.payload.size()));
    w.put_bytes(s.payload.data(), s.payload.size());
    w.put(crc32_of(s.payload));
  }
  return w.take();
}

std::vector<Section> decode_container(const std::vector<std::uint8_t>& bytes, FileKind expected) {
  ByteReader r(bytes, kind_name(expected) + " file");
  char magic[4];
  r.get_bytes(magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, ErrorCode::MagicMismatch,
          "not a csiloc file (bad magic)");
  const auto version = r.get<std::uint16_t>();
  require(version == kFormatVersion, ErrorCode::VersionUnsupported,
          "unsupported format version " + std::to_string(version) + " (expected " +
              std::to_string(kFormatVersion) + ")");
  const auto kind = r.get<std::uint16_t>();
  require(kind == static_cast<std::uint16_t>(expected), ErrorCode::Io,
          "file kind " + std::to_string(kind) + " is not a " + kind_name(expected) + " file");
  const auto count = r.get<std::uint32_t>();
  std::vector<Section> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    Section s;
    s.tag.resize(4);
    r.get_bytes(s.tag.data(), 4);
    const auto length = r.get<std::uint64_t>();
    r.need_values(length, 1);
    s.payload.resize(length);
    r.get_bytes(s.payload.data(), length);
    const auto crc = r.get<std::uint32_t>();
    require(crc == crc32_of(s.payload), ErrorCode::ChecksumError,
            "checksum mismatch in section " + s.tag);
    sections.push_back(std::move(s));
  }
  r.finish();
  return sections;
}

void write_container(const std::filesystem::path& path, FileKind kind,
                     const std::vector<Section>& sections) {
  const auto bytes = encode_container(kind, sections);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + path.string());
}

std::vector<Section> read_container(const std::filesystem::path& path, FileKind expected) {
  return decode_container(read_file(path), expected);
}

void round_csi_to_float(std::vector<CsiMeasurement>& samples) {
  for (auto& s : samples) {
    for (auto& c : s.h.data()) {
      c = Complex(static_cast<float>(c.real()), static_cast<float>(c.imag()));
    }
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::vector<Section> sections;
  sections.push_back(text_section("CONF", ds.config));
  if (ds.grid) sections.push_back(encode_grid(*ds.grid));

  ByteWriter w;
  w.put(static_cast<std::uint64_t>(ds.samples.size()));
  w.put(static_cast<std::uint32_t>(ds.subcarriers));
  w.put(static_cast<std::uint16_t>(ds.rx));
  w.put(static_cast<std::uint16_t>(ds.tx));
  w.put(static_cast<std::uint16_t>(ds.dims));
  std::vector<std::uint64_t> ids;
  for (const auto& s : ds.samples) {
    require(s.h.subcarriers() == ds.subcarriers && s.h.rx() == ds.rx && s.h.tx() == ds.tx,
            ErrorCode::DimensionMismatch, "sample CSI shape differs from the dataset header");
    require(s.true_position.size() == ds.dims, ErrorCode::DimensionMismatch,
            "sample position dimension differs from the dataset header");
    w.put(static_cast<std::uint16_t>(s.ap_index));
    w.put_f64(s.true_position);
    for (const auto& c : s.h.data()) {
      w.put(static_cast<float>(c.real()));
      w.put(static_cast<float>(c.imag()));
    }
    ids.push_back(s.timestamp);
  }
  sections.push_back({"SAMP", w.take()});
  sections.push_back(encode_snapshots(ids));

  if (ds.features) {
    const auto& f = *ds.features;
    ByteWriter fw;
    fw.put(static_cast<std::uint64_t>(f.values.cols()));
    fw.put(static_cast<std::uint32_t>(f.values.rows()));
    fw.put(static_cast<std::uint8_t>(f.per_tx ? 1 : 0));
    fw.put(static_cast<std::uint16_t>(f.tx_blocks));
    // Column-major storage of the transposed matrix is row-major per sample.
    fw.put_f64(f.values);
    sections.push_back({"FEAT", fw.take()});
  }
  if (ds.labels) {
    ByteWriter lw;
    lw.put(static_cast<std::uint64_t>(ds.labels->cols()));
    lw.put(static_cast<std::uint32_t>(ds.labels->rows()));
    lw.put_f64(*ds.labels);
    sections.push_back({"LABL", lw.take()});
  }
  write_container(path, FileKind::Dataset, sections);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::Dataset);
  Dataset ds;
  ds.config = section_text(need_section(sections, "CONF"));
  if (const Section* g = find_section(sections, "GRID")) ds.grid = decode_grid(*g);

  ByteReader r(need_section(sections, "SAMP").payload, "SAMP section");
  const auto count = r.get<std::uint64_t>();
  ds.subcarriers = static_cast<int>(r.get<std::uint32_t>());
  ds.rx = r.get<std::uint16_t>();
  ds.tx = r.get<std::uint16_t>();
  ds.dims = r.get<std::uint16_t>();
  const std::size_t cells = static_cast<std::size_t>(ds.subcarriers) * ds.rx * ds.tx;
  const std::size_t per_sample = 2 + 8 * static_cast<std::size_t>(ds.dims) + 8 * cells;
  r.need_values(count, per_sample);
  ds.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    CsiMeasurement m;
    m.ap_index = r.get<std::uint16_t>();
    m.true_position = r.get_f64(ds.dims);
    m.h = CsiTensor(ds.subcarriers, ds.rx, ds.tx);
    for (auto& c : m.h.data()) {
      const float re = r.get<float>();
      const float im = r.get<float>();
      c = Complex(re, im);
    }
    ds.samples.push_back(std::move(m));
  }
  r.finish();

  const auto ids = decode_snapshots(need_section(sections, "TIME"));
  require(ids.size() == ds.samples.size(), ErrorCode::Io,
          "TIME section count differs from SAMP count");
  for (std::size_t i = 0; i < ids.size(); ++i) ds.samples[i].timestamp = ids[i];

  if (const Section* f = find_section(sections, "FEAT")) {
    ByteReader fr(f->payload, "FEAT section");
    const auto rows = fr.get<std::uint64_t>();
    const auto cols = fr.get<std::uint32_t>();
    FeatureBlock block;
    block.per_tx = fr.get<std::uint8_t>() != 0;
    block.tx_blocks = fr.get<std::uint16_t>();
    fr.need_values(rows, 8 * static_cast<std::size_t>(cols));
    block.values = fr.get_f64(cols, static_cast<Eigen::Index>(rows));
    fr.finish();
    require(rows == count, ErrorCode::Io, "FEAT row count differs from SAMP count");
    ds.features = std::move(block);
  }
  if (const Section* l = find_section(sections, "LABL")) {
    ByteReader lr(l->payload, "LABL section");
    const auto rows = lr.get<std::uint64_t>();
    const auto k = lr.get<std::uint32_t>();
    lr.need_values(rows, 8 * static_cast<std::size_t>(k));
    ds.labels = lr.get_f64(k, static_cast<Eigen::Index>(rows));
    lr.finish();
    require(rows == count, ErrorCode::Io, "LABL row count differs from SAMP count");
  }
  return ds;
}

void save_model(const std::filesystem::path& path, const ModelFile& mf) {
  const auto& layers = mf.model.layers();
  require(!layers.empty(), ErrorCode::InvalidArgument, "cannot save an empty model");
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    w.put(static_cast<std::uint32_t>(layer.weight.cols()));
    w.put(static_cast<std::uint32_t>(layer.weight.rows()));
    w.put(static_cast<std::uint8_t>(layer.batch_norm ? 1 : 0));
    w.put_f64(layer.weight);
    w.put_f64(layer.bias);
    if (layer.batch_norm) {
      w.put_f64(layer.bn_scale);
      w.put_f64(layer.bn_shift);
      w.put_f64(layer.running_mean);
      w.put_f64(layer.running_var);
    }
  }
  std::vector<Section> sections{text_section("CONF", mf.config), encode_grid(mf.grid),
                                {"MODL", w.take()}};
  if (mf.model.coord_head()) {
    ByteWriter hw;
    const auto& head = *mf.model.coord_head();
    hw.put(static_cast<std::uint32_t>(head.rows()));
    hw.put(static_cast<std::uint32_t>(head.cols()));
    hw.put_f64(head);
    sections.push_back({"CHED", hw.take()});
  }
  write_container(path, FileKind::Model, sections);
}

ModelFile load_model(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::Model);
  ModelFile mf;
  mf.config = section_text(need_section(sections, "CONF"));
  mf.grid = decode_grid(need_section(sections, "GRID"));

  ByteReader r(need_section(sections, "MODL").payload, "MODL section");
  const auto count = r.get<std::uint32_t>();
  require(count >= 1, ErrorCode::Io, "MODL section: model has no layers");
  auto& layers = mf.model.layers();
  Eigen::Index prev_out = -1;
  for (std::uint32_t l = 0; l < count; ++l) {
    DenseLayer layer;
    const auto in = r.get<std::uint32_t>();
    const auto out = r.get<std::uint32_t>();
    require(prev_out < 0 || prev_out == in, ErrorCode::Io, "MODL section: layer widths do not chain");
    prev_out = out;
    layer.batch_norm = r.get<std::uint8_t>() != 0;
    layer.weight = r.get_f64(out, in);
    layer.bias = r.get_f64(out);
    if (layer.batch_norm) {
      layer.bn_scale = r.get_f64(out);
      layer.bn_shift = r.get_f64(out);
      layer.running_mean = r.get_f64(out);
      layer.running_var = r.get_f64(out);
    }
    layers.push_back(std::move(layer));
  }
  r.finish();
  mf.model.set_mode(Mode::Infer);

  if (const Section* h = find_section(sections, "CHED")) {
    ByteReader hr(h->payload, "CHED section");
    const auto rows = hr.get<std::uint32_t>();
    const auto cols = hr.get<std::uint32_t>();
    mf.model.set_coord_head(std::optional<Eigen::MatrixXd>(hr.get_f64(rows, cols)));
    hr.finish();
  }
  return mf;
}

void save_fusion_weights(const std::filesystem::path& path, const FusionWeights& weights) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(weights.matrix.rows()));
  w.put(static_cast<std::uint32_t>(weights.matrix.cols()));
  w.put(static_cast<std::uint32_t>(weights.links));
  w.put_f64(weights.matrix);
  write_container(path, FileKind::FusionWeights, {{"FUSW", w.take()}});
}

FusionWeights load_fusion_weights(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::FusionWeights);
  ByteReader r(need_section(sections, "FUSW").payload, "FUSW section");
  FusionWeights out;
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  out.links = static_cast<int>(r.get<std::uint32_t>());
  out.matrix = r.get_f64(rows, cols);
  r.finish();
  require(out.links >= 1 && cols % out.links == 0, ErrorCode::Io,
          "FUSW section: column count is not a multiple of the link count");
  return out;
}

void write_map_exchange(const std::filesystem::path& path, const MapExchange& x) {
  const Eigen::Index k = x.grid.count();
  require(x.links >= 1 && x.maps.rows() == x.links * k, ErrorCode::DimensionMismatch,
          "map exchange rows must equal links * K");
  require(static_cast<std::size_t>(x.maps.cols()) == x.snapshots.size(),
          ErrorCode::DimensionMismatch, "one snapshot id per sample is required");
  ByteWriter w;
  w.put(static_cast<std::uint64_t>(x.maps.cols()));
  w.put(static_cast<std::uint32_t>(x.links));
  w.put(static_cast<std::uint32_t>(k));
  w.put_f64(x.maps);
  write_container(path, FileKind::Maps,
                  {encode_grid(x.grid), encode_snapshots(x.snapshots), {"MAPS", w.take()}});
}

MapExchange read_map_exchange(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::Maps);
  MapExchange x;
  x.grid = decode_grid(need_section(sections, "GRID"));
  x.snapshots = decode_snapshots(need_section(sections, "TIME"));
  ByteReader r(need_section(sections, "MAPS").payload, "MAPS section");
  const auto count = r.get<std::uint64_t>();
  x.links = static_cast<int>(r.get<std::uint32_t>());
  const auto k = r.get<std::uint32_t>();
  require(static_cast<int>(k) == x.grid.count(), ErrorCode::Io, "MAPS section: K differs from grid");
  r.need_values(count, 8 * static_cast<std::size_t>(x.links) * k);
  x.maps = r.get_f64(static_cast<Eigen::Index>(x.links) * k, static_cast<Eigen::Index>(count));
  r.finish();
  require(x.snapshots.size() == count, ErrorCode::Io, "TIME count differs from MAPS count");
  return x;
}

void write_meanvar_exchange(const std::filesystem::path& path, const MeanVarExchange& x) {
  require(x.links >= 1 && x.values.rows() == 2 * x.dims * x.links, ErrorCode::DimensionMismatch,
          "mean/variance exchange rows must equal 2 * D * links");
  require(static_cast<std::size_t>(x.values.cols()) == x.snapshots.size(),
          ErrorCode::DimensionMismatch, "one snapshot id per sample is required");
  ByteWriter w;
  w.put(static_cast<std::uint64_t>(x.values.cols()));
  w.put(static_cast<std::uint32_t>(x.links));
  w.put(static_cast<std::uint32_t>(x.dims));
  w.put_f64(x.values);
  write_container(path, FileKind::MeanVariance,
                  {encode_snapshots(x.snapshots), {"MVAR", w.take()}});
}

MeanVarExchange read_meanvar_exchange(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::MeanVariance);
  MeanVarExchange x;
  x.snapshots = decode_snapshots(need_section(sections, "TIME"));
  ByteReader r(need_section(sections, "MVAR").payload, "MVAR section");
  const auto count = r.get<std::uint64_t>();
  x.links = static_cast<int>(r.get<std::uint32_t>());
  x.dims = static_cast<int>(r.get<std::uint32_t>());
  r.need_values(count, 16 * static_cast<std::size_t>(x.links) * x.dims);
  x.values = r.get_f64(2 * static_cast<Eigen::Index>(x.links) * x.dims,
                       static_cast<Eigen::Index>(count));
  r.finish();
  require(x.snapshots.size() == count, ErrorCode::Io, "TIME count differs from MVAR count");
  return x;
}

void write_estimates(const std::filesystem::path& path, const EstimateFile& e) {
  require(static_cast<std::size_t>(e.positions.cols()) == e.snapshots.size(),
          ErrorCode::DimensionMismatch, "one snapshot id per estimate is required");
  ByteWriter w;
  w.put(static_cast<std::uint64_t>(e.positions.cols()));
  w.put(static_cast<std::uint32_t>(e.positions.rows()));
  w.put_f64(e.positions);
  write_container(path, FileKind::Estimates,
                  {text_section("NAME", e.method), encode_snapshots(e.snapshots),
                   {"ESTM", w.take()}});
}

EstimateFile read_estimates(const std::filesystem::path& path) {
  const auto sections = read_container(path, FileKind::Estimates);
  EstimateFile e;
  e.method = section_text(need_section(sections, "NAME"));
  e.snapshots = decode_snapshots(need_section(sections, "TIME"));
  ByteReader r(need_section(sections, "ESTM").payload, "ESTM section");
  const auto count = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  r.need_values(count, 8 * static_cast<std::size_t>(d));
  e.positions = r.get_f64(d, static_cast<Eigen::Index>(count));
  r.finish();
  require(e.snapshots.size() == count, ErrorCode::Io, "TIME count differs from ESTM count");
  return e;
}

}  // namespace csiloc
