#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "phasekit/aggregation.hpp"
#include "phasekit/config.hpp"
#include "phasekit/dataset.hpp"
#include "phasekit/matrix.hpp"
#include "phasekit/tcn.hpp"

namespace phasekit {

// ---------------------------------------------------------------------------
// Little-endian primitives (explicit byte packing; the on-disk formats are
// little-endian regardless of host)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string path)
      : data_(data), path_(std::move(path)) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(byte()) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string bytes(std::size_t count) {
    if (pos_ + count > data_.size()) throw IoError(path_ + ": truncated file");
    std::string out = data_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  bool exhausted() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint32_t byte() {
    if (pos_ >= data_.size()) throw IoError(path_ + ": truncated file");
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out.flush()) throw IoError("failed writing " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embedding files: magic "TSVE", version u16, dim u32, frame_count u32,
// row-major (frame-major) little-endian f32 payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kEmbeddingFileVersion = 1;

inline void write_embeddings(const std::string& path, const Matrix& frames) {
  std::string out;
  out += "TSVE";
  detail::put_u16(out, kEmbeddingFileVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(frames.cols()));
  detail::put_u32(out, static_cast<std::uint32_t>(frames.rows()));
  for (std::size_t i = 0; i < frames.size(); ++i)
    detail::put_f32(out, static_cast<float>(frames.data()[i]));
  detail::write_file(path, out);
}

struct EmbeddingHeader {
  std::uint32_t dim = 0;
  std::uint32_t frame_count = 0;
};

inline EmbeddingHeader read_embedding_header(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader reader(data, path);
  if (reader.bytes(4) != "TSVE") throw IoError(path + ": not an embedding file (bad magic)");
  const std::uint16_t version = reader.u16();
  if (version != kEmbeddingFileVersion)
    throw IoError(path + ": unsupported embedding file version " + std::to_string(version));
  EmbeddingHeader h;
  h.dim = reader.u32();
  h.frame_count = reader.u32();
  const std::size_t expected = static_cast<std::size_t>(h.dim) * h.frame_count * 4;
  if (reader.remaining() != expected)
    throw IoError(path + ": payload is " + std::to_string(reader.remaining()) +
                  " bytes, header implies " + std::to_string(expected));
  return h;
}

inline Matrix read_embeddings(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader reader(data, path);
  if (reader.bytes(4) != "TSVE") throw IoError(path + ": not an embedding file (bad magic)");
  const std::uint16_t version = reader.u16();
  if (version != kEmbeddingFileVersion)
    throw IoError(path + ": unsupported embedding file version " + std::to_string(version));
  const std::uint32_t dim = reader.u32();
  const std::uint32_t frame_count = reader.u32();
  const std::size_t expected = static_cast<std::size_t>(dim) * frame_count * 4;
  if (reader.remaining() != expected)
    throw IoError(path + ": payload is " + std::to_string(reader.remaining()) +
                  " bytes, header implies " + std::to_string(expected));
  Matrix m(frame_count, dim);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(reader.f32());
  if (!m.all_finite()) throw DataError(path + ": embedding payload contains NaN/Inf");
  return m;
}

// ---------------------------------------------------------------------------
// Labels: one integer per line.
// ---------------------------------------------------------------------------

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (int y : labels) out << y << '\n';
  if (!out.flush()) throw IoError("failed writing " + path);
}

inline std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    int value = 0;
    try {
      value = std::stoi(line, &pos);
    } catch (const std::exception&) {
      throw DataError(path + ": malformed label line: " + line);
    }
    if (line.find_first_not_of(" \t\r", pos) != std::string::npos)
      throw DataError(path + ": malformed label line: " + line);
    labels.push_back(value);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Dataset manifest: one video per line,
//   id  spatial-path  temporal-path|-  labels-path  N
// whitespace-delimited, paths relative to the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string spatial_path;
  std::string temporal_path;  // empty when absent
  std::string labels_path;
  int n_phases = 0;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;
};

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string temporal, n;
    if (!(fields >> e.id >> e.spatial_path >> temporal >> e.labels_path >> n))
      throw DataError(path + ": malformed manifest line: " + line);
    e.temporal_path = temporal == "-" ? std::string() : temporal;
    try {
      e.n_phases = std::stoi(n);
    } catch (const std::exception&) {
      throw DataError(path + ": bad phase count in line: " + line);
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw DataError(path + ": manifest lists no videos");
  return m;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  out << "# id spatial temporal labels n_phases\n";
  for (const ManifestEntry& e : entries)
    out << e.id << '\t' << e.spatial_path << '\t'
        << (e.temporal_path.empty() ? "-" : e.temporal_path) << '\t' << e.labels_path << '\t'
        << e.n_phases << '\n';
  if (!out.flush()) throw IoError("failed writing manifest " + path);
}

inline std::string resolve_path(const Manifest& m, const std::string& relative) {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p.string() : (m.base_dir / p).string();
}

/// Checks every referenced file exists and the label length matches the
/// embedding frame count; error messages carry the offending video id.
inline void validate_manifest(const Manifest& m, bool need_temporal = false) {
  for (const ManifestEntry& e : m.entries) {
    const std::string spatial = resolve_path(m, e.spatial_path);
    if (!std::filesystem::exists(spatial))
      throw DataError("video " + e.id + ": missing spatial embeddings " + spatial);
    const EmbeddingHeader sh = read_embedding_header(spatial);
    const std::string labels_path = resolve_path(m, e.labels_path);
    if (!std::filesystem::exists(labels_path))
      throw DataError("video " + e.id + ": missing labels " + labels_path);
    const std::vector<int> labels = read_labels(labels_path);
    if (labels.size() != sh.frame_count)
      throw DataError("video " + e.id + ": " + std::to_string(labels.size()) +
                      " labels vs " + std::to_string(sh.frame_count) + " frames");
    validate_labels(labels, e.n_phases, e.id);
    if (e.temporal_path.empty()) {
      if (need_temporal)
        throw DataError("video " + e.id + ": manifest lists no temporal embeddings");
      continue;
    }
    const std::string temporal = resolve_path(m, e.temporal_path);
    if (!std::filesystem::exists(temporal))
      throw DataError("video " + e.id + ": missing temporal embeddings " + temporal);
    const EmbeddingHeader th = read_embedding_header(temporal);
    if (th.frame_count != sh.frame_count)
      throw DataError("video " + e.id + ": temporal frame count " +
                      std::to_string(th.frame_count) + " vs spatial " +
                      std::to_string(sh.frame_count));
  }
}

inline VideoData load_video(const Manifest& m, const ManifestEntry& e,
                            bool need_temporal = false) {
  VideoData v;
  v.id = e.id;
  v.spatial = read_embeddings(resolve_path(m, e.spatial_path));
  if (!e.temporal_path.empty())
    v.temporal = read_embeddings(resolve_path(m, e.temporal_path));
  else if (need_temporal)
    throw DataError("video " + e.id + ": manifest lists no temporal embeddings");
  v.labels = read_labels(resolve_path(m, e.labels_path));
  if (v.labels.size() != v.spatial.rows())
    throw DataError("video " + e.id + ": " + std::to_string(v.labels.size()) +
                    " labels vs " + std::to_string(v.spatial.rows()) + " frames");
  validate_labels(v.labels, e.n_phases, e.id);
  return v;
}

inline std::vector<VideoData> load_dataset(const Manifest& m, bool need_temporal = false) {
  std::vector<VideoData> out;
  out.reserve(m.entries.size());
  for (const ManifestEntry& e : m.entries) out.push_back(load_video(m, e, need_temporal));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "TSVK", version u16, config echo, named f64 blocks.
// load(save(p)) reproduces every parameter bit-exactly.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Matrix>> blocks;  // insertion order preserved

  const Matrix* find(const std::string& name) const {
    for (const auto& [n, m] : blocks)
      if (n == name) return &m;
    return nullptr;
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out += "TSVK";
  detail::put_u16(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out += ckpt.config_text;
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, m] : ckpt.blocks) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (std::size_t i = 0; i < m.size(); ++i) detail::put_f64(out, m.data()[i]);
  }
  detail::write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader reader(data, path);
  if (reader.bytes(4) != "TSVK") throw IoError(path + ": not a checkpoint (bad magic)");
  const std::uint16_t version = reader.u16();
  if (version != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_text = reader.bytes(reader.u32());
  const std::uint32_t count = reader.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = reader.bytes(reader.u16());
    const std::uint32_t rows = reader.u32();
    const std::uint32_t cols = reader.u32();
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = reader.f64();
    ckpt.blocks.emplace_back(name, std::move(m));
  }
  if (!reader.exhausted()) throw IoError(path + ": trailing bytes after last block");
  return ckpt;
}

inline void append_aggregation_blocks(Checkpoint& ckpt, const AggregationParams& p) {
  for_each_aggregation_param(p, [&](const std::string& name, const Matrix& m) {
    ckpt.blocks.emplace_back(name, m);
  });
}

inline void append_tcn_blocks(Checkpoint& ckpt, const TcnParams& p) {
  for_each_tcn_param(p, [&](const std::string& name, const Matrix& m) {
    ckpt.blocks.emplace_back(name, m);
  });
}

namespace detail {

template <typename Params, typename ForEach>
void fill_params_from_checkpoint(const Checkpoint& ckpt, Params& params, ForEach&& fe,
                                 const std::string& what) {
  fe(params, [&](const std::string& name, Matrix& m) {
    const Matrix* stored = ckpt.find(name);
    if (!stored) throw DataError("checkpoint is missing " + what + " block " + name);
    if (!stored->same_shape(m))
      throw DataError("checkpoint block " + name + " is " + stored->shape_str() +
                      ", expected " + m.shape_str());
    m = *stored;
  });
}

}  // namespace detail

/// A checkpoint with its config echo materialized into parameter structs.
/// Either section (TCN / aggregation head) may be absent.
struct LoadedModel {
  RunConfig config;
  bool has_tcn = false;
  bool has_agg = false;
  TcnParams tcn;
  AggregationParams agg;
};

inline LoadedModel load_model(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  LoadedModel model;
  model.config = RunConfig::from_text(ckpt.config_text);
  Rng rng(RngSeed{model.config.seed});
  for (const auto& [name, m] : ckpt.blocks) {
    if (name.rfind("tcn.", 0) == 0) model.has_tcn = true;
    if (name.rfind("agg.", 0) == 0) model.has_agg = true;
  }
  if (model.has_tcn) {
    model.tcn = model.config.init_tcn(rng);
    detail::fill_params_from_checkpoint(ckpt, model.tcn, [](TcnParams& p, auto&& fn) {
      for_each_tcn_param(p, fn);
    }, "tcn");
  }
  if (model.has_agg) {
    model.agg = model.config.init_aggregation(rng);
    detail::fill_params_from_checkpoint(ckpt, model.agg, [](AggregationParams& p, auto&& fn) {
      for_each_aggregation_param(p, fn);
    }, "aggregation");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction traces: per-frame probabilities, argmax label, latency.
// ---------------------------------------------------------------------------

inline void write_trace(const std::string& path, const PredictionTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path);
  out << "# phasekit-trace v1\n";
  out << "# frames=" << trace.probs.rows() << " classes=" << trace.probs.cols()
      << " columns=label,probs,latency_ns\n";
  out.precision(17);
  for (std::size_t t = 0; t < trace.probs.rows(); ++t) {
    out << trace.labels[t];
    for (std::size_t j = 0; j < trace.probs.cols(); ++j) out << ' ' << trace.probs(t, j);
    out << ' ' << trace.latency_ns[t] << '\n';
  }
  if (!out.flush()) throw IoError("failed writing trace " + path);
}

inline PredictionTrace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read trace " + path);
  std::string line;
  std::size_t frames = 0, classes = 0;
  std::vector<std::vector<double>> rows;
  PredictionTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t pos = line.find("frames=");
      if (pos != std::string::npos) frames = std::stoul(line.substr(pos + 7));
      pos = line.find("classes=");
      if (pos != std::string::npos) classes = std::stoul(line.substr(pos + 8));
      continue;
    }
    std::istringstream fields(line);
    int label = 0;
    if (!(fields >> label)) throw DataError(path + ": malformed trace line: " + line);
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (classes == 0 || values.size() != classes + 1)
      throw DataError(path + ": malformed trace line: " + line);
    trace.labels.push_back(label);
    trace.latency_ns.push_back(values.back());
    values.pop_back();
    rows.push_back(std::move(values));
  }
  if (frames != rows.size())
    throw DataError(path + ": header claims " + std::to_string(frames) + " frames, file has " +
                    std::to_string(rows.size()));
  trace.probs = Matrix(rows.size(), classes);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < classes; ++j) trace.probs(t, j) = rows[t][j];
  return trace;
}

/// Loss curve: "epoch<TAB>loss" per line.
inline void write_loss_curve(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << '\t' << curve[i] << '\n';
  if (!out.flush()) throw IoError("failed writing " + path);
}

}  // namespace phasekit
