#include "stepbcd/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"

namespace stepbcd {

namespace {

using Kind = DataError::Kind;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(Kind::Io, "write failed for " + path.string());
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

// Little-endian writer for the checkpoint payload.
class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double v : m.data()) f64(v);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Matrix matrix(const char* what) {
    const std::uint64_t rows = u64(), cols = u64();
    std::uint64_t count = 0, bytes = 0;
    if (__builtin_mul_overflow(rows, cols, &count) || __builtin_mul_overflow(count, 8, &bytes))
      throw DataError(Kind::DimensionOverflow,
                      source_ + ": " + what + " dimensions overflow");
    need(bytes);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = f64();
    return m;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) {
    if (n > bytes_.size() - pos_)
      throw DataError(Kind::Truncated, source_ + " is truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kCheckpointMagic{"STEPBCD\0", 8};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::size_t Dataset::label(std::size_t s) const {
  const std::size_t idx = one_hot_index(Y.column(s));
  if (idx == npos)
    throw DataError(Kind::NotOneHot, "label column " + std::to_string(s) + " is not one-hot");
  return idx;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return {X.select_columns(indices), Y.select_columns(indices), names};
}

Dataset Dataset::shuffled_prefix(std::size_t n, Rng& rng) const {
  auto order = shuffled_indices(size(), rng);
  order.resize(std::min(n, order.size()));
  return subset(order);
}

void Dataset::validate() const {
  if (X.cols() != Y.cols())
    throw DataError(Kind::CountMismatch, "dataset has " + std::to_string(X.cols()) +
                                             " inputs but " + std::to_string(Y.cols()) + " labels");
  for (std::size_t s = 0; s < Y.cols(); ++s) label(s);
}

IdxImages load_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4) throw DataError(Kind::Truncated, path.string() + ": IDX header truncated");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic)
    throw DataError(Kind::BadMagic, path.string() + ": expected image magic " +
                                        hex32(kIdxImageMagic) + ", found " + hex32(magic));
  if (bytes.size() < 16) throw DataError(Kind::Truncated, path.string() + ": IDX header truncated");
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  std::size_t plane = 0, total = 0;
  if (__builtin_mul_overflow(img.rows, img.cols, &plane) ||
      __builtin_mul_overflow(plane, img.count, &total) || total > bytes.max_size() - 16)
    throw DataError(Kind::DimensionOverflow, path.string() + ": image dimensions overflow");
  if (bytes.size() - 16 < total)
    throw DataError(Kind::Truncated, path.string() + ": expected " + std::to_string(total) +
                                         " pixel bytes, found " + std::to_string(bytes.size() - 16));
  if (bytes.size() - 16 > total)
    throw DataError(Kind::Parse, path.string() + ": trailing bytes after image payload");
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4) throw DataError(Kind::Truncated, path.string() + ": IDX header truncated");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic)
    throw DataError(Kind::BadMagic, path.string() + ": expected label magic " +
                                        hex32(kIdxLabelMagic) + ", found " + hex32(magic));
  if (bytes.size() < 8) throw DataError(Kind::Truncated, path.string() + ": IDX header truncated");
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count)
    throw DataError(Kind::Truncated, path.string() + ": expected " + std::to_string(count) +
                                         " labels, found " + std::to_string(bytes.size() - 8));
  if (bytes.size() - 8 > count)
    throw DataError(Kind::Parse, path.string() + ": trailing bytes after label payload");
  return {bytes.begin() + 8, bytes.end()};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols)
    throw DataError(Kind::CountMismatch, "IDX image payload does not match its dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  write_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_file(path, out);
}

Dataset to_dataset(const IdxImages& images, std::span<const std::uint8_t> labels,
                   std::size_t num_classes) {
  if (images.count != labels.size())
    throw DataError(Kind::CountMismatch, std::to_string(images.count) + " images but " +
                                             std::to_string(labels.size()) + " labels");
  if (num_classes == 0) throw DataError(Kind::Parse, "class count must be positive");
  const std::size_t dim = images.rows * images.cols;
  Dataset data{Matrix(dim, images.count), Matrix(num_classes, images.count), {}};
  for (std::size_t s = 0; s < images.count; ++s) {
    if (labels[s] >= num_classes)
      throw DataError(Kind::LabelOutOfRange, "label " + std::to_string(labels[s]) + " at sample " +
                                                 std::to_string(s) + " is not below class count " +
                                                 std::to_string(num_classes));
    for (std::size_t p = 0; p < dim; ++p) data.X(p, s) = images.pixels[s * dim + p] / 255.0;
    data.Y(labels[s], s) = 1.0;
  }
  return data;
}

Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError(Kind::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      double v = 0.0;
      const char* b = first == std::string::npos ? cell.data() : cell.data() + first;
      const char* e = first == std::string::npos ? b : cell.data() + last + 1;
      const auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e || b == e)
        throw DataError(Kind::Parse, path.string() + ":" + std::to_string(line_no) +
                                         ": cannot parse '" + cell + "'");
      fields.push_back(v);
    }
    if (fields.size() < 2)
      throw DataError(Kind::Parse, path.string() + ":" + std::to_string(line_no) +
                                       ": need at least one feature and a label");
    const double lab = fields.back();
    fields.pop_back();
    if (lab < 0 || lab != std::floor(lab) || lab >= static_cast<double>(num_classes))
      throw DataError(Kind::LabelOutOfRange, path.string() + ":" + std::to_string(line_no) +
                                                 ": label " + std::to_string(lab) +
                                                 " is not a class index below " +
                                                 std::to_string(num_classes));
    for (double v : fields)
      if (!(v >= 0.0 && v <= 1.0))
        throw DataError(Kind::Parse, path.string() + ":" + std::to_string(line_no) +
                                         ": feature outside [0,1]");
    if (!features.empty() && fields.size() != features.front().size())
      throw DataError(Kind::CountMismatch, path.string() + ":" + std::to_string(line_no) +
                                               ": inconsistent feature count");
    features.push_back(std::move(fields));
    labels.push_back(static_cast<std::size_t>(lab));
  }
  if (features.empty()) throw DataError(Kind::EmptySplit, path.string() + " has no samples");
  Dataset data{Matrix(features.front().size(), features.size()),
               Matrix(num_classes, features.size()), {}};
  for (std::size_t s = 0; s < features.size(); ++s) {
    data.X.set_column(s, features[s]);
    data.Y(labels[s], s) = 1.0;
  }
  return data;
}

Dataset add_gaussian_noise(const Dataset& data, double sigma, Rng& rng, bool clamp) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be nonnegative");
  Dataset out = data;
  if (sigma == 0.0) return out;
  for (double& v : out.X.data()) {
    v += sigma * rng.normal();
    if (clamp) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const NetworkShape& shape, const Hyperparams& hp) {
  state.check(shape, state.samples());
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(shape.layers()));
  for (std::size_t d : shape.dims) w.u64(d);
  w.u64(state.samples());
  for (double v : {hp.tau, hp.pi, hp.gamma, hp.lambda, hp.beta, hp.eps_tiny}) w.f64(v);
  w.u64(hp.L);
  w.u64(hp.K);
  for (const auto& m : state.W) w.matrix(m);
  for (const auto& m : state.U) w.matrix(m);
  for (const auto& m : state.V) w.matrix(m);
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string src = path.string();
  if (bytes.size() < kCheckpointMagic.size() + 4)
    throw DataError(Kind::Truncated, src + " is too short to be a checkpoint");
  ByteReader r(bytes, src);
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic)
    throw DataError(Kind::BadMagic, src + " is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError(Kind::VersionMismatch, src + ": checkpoint format version " +
                                               std::to_string(version) + ", expected " +
                                               std::to_string(kCheckpointVersion));
  // A trailing CRC mismatch outranks any structural error found while parsing:
  // corrupted size fields make an intact-length file look truncated.
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = std::uint32_t{bytes[body]} | (std::uint32_t{bytes[body + 1]} << 8) |
                               (std::uint32_t{bytes[body + 2]} << 16) |
                               (std::uint32_t{bytes[body + 3]} << 24);
  const std::uint32_t actual = crc32_of(std::span(bytes).first(body));
  const bool crc_ok = stored == actual;
  auto checksum_error = [&] {
    return DataError(Kind::Checksum, src + ": checksum mismatch (stored " + hex32(stored) +
                                         ", computed " + hex32(actual) +
                                         "); the file is corrupt or truncated");
  };
  Checkpoint cp;
  std::uint64_t n = 0;
  try {
    const std::uint32_t h = r.u32();
    if (h == 0 || h > 4096)
      throw DataError(Kind::DimensionOverflow, src + ": implausible layer count");
    cp.shape.dims.resize(h + 1);
    for (auto& d : cp.shape.dims) d = r.u64();
    n = r.u64();
    cp.hp.tau = r.f64();
    cp.hp.pi = r.f64();
    cp.hp.gamma = r.f64();
    cp.hp.lambda = r.f64();
    cp.hp.beta = r.f64();
    cp.hp.eps_tiny = r.f64();
    cp.hp.L = r.u64();
    cp.hp.K = r.u64();
    for (std::uint32_t i = 0; i < h; ++i) cp.state.W.push_back(r.matrix("W"));
    for (std::uint32_t i = 0; i < h; ++i) cp.state.U.push_back(r.matrix("U"));
    for (std::uint32_t i = 0; i + 1 < h; ++i) cp.state.V.push_back(r.matrix("V"));
    r.u32();
  } catch (const DataError& e) {
    if (!crc_ok) throw checksum_error();
    throw;
  }
  if (!crc_ok) throw checksum_error();
  if (r.position() != bytes.size())
    throw DataError(Kind::Parse, src + ": trailing bytes after checkpoint");
  try {
    cp.shape.validate();
    cp.state.check(cp.shape, n);
  } catch (const std::exception& e) {
    throw DataError(Kind::ShapeMismatch, src + ": inconsistent checkpoint: " + e.what());
  }
  return cp;
}

void require_shape(const Checkpoint& checkpoint, const NetworkShape& expected) {
  if (!(checkpoint.shape == expected))
    throw DataError(Kind::ShapeMismatch, "checkpoint was trained for architecture " +
                                             checkpoint.shape.to_string() + ", expected " +
                                             expected.to_string());
}

}  // namespace stepbcd
