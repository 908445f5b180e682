#pragma once

// On-disk formats. Datasets are a little-endian binary stream with a JSON
// manifest beside it; checkpoints are a single binary file with an embedded
// JSON header. Both are protected by CRC32 checksums.

#include <zlib.h>

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdl/diffusion.hpp"
#include "hdl/error.hpp"
#include "hdl/fields.hpp"

namespace hdl::store {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

using json = nlohmann::json;

inline constexpr char kDatasetMagic[8] = {'H', 'D', 'L', 'D', '0', '0', '0', '1'};
inline constexpr char kCheckpointMagic[8] = {'H', 'D', 'L', 'C', '0', '0', '0', '1'};
inline constexpr int kFormatVersion = 1;

inline std::uint32_t crc32_of(const void* data, std::size_t n, std::uint32_t crc = 0) {
  const auto* p = static_cast<const Bytef*>(data);
  uLong c = crc;
  while (n > 0) {
    const uInt chunk = uInt(std::min<std::size_t>(n, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return std::uint32_t(c);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling and renames, so readers never see a partial file.
inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

template <class T>
void put(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

inline void put_doubles(std::string& buf, const double* p, std::size_t n) {
  buf.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  ErrorKind on_short;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw Error(on_short, "file truncated at byte " + std::to_string(pos));
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  void get_doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, buf.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
  }
};

inline double json_real(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets

struct DatasetRecord {
  std::uint64_t index = 0;
  std::vector<double> c;
  std::vector<double> mask;
  std::vector<std::complex<double>> u;
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t total() const { return train + val + test; }
};

struct DatasetManifest {
  int format_version = kFormatVersion;
  double frequency_hz = 0.0;
  GridShape shape;
  double dx = 0.0;
  GrfHyperParams grf;
  NormStats norm;
  SplitSizes split;
  std::uint64_t root_seed = 0;
  std::size_t record_count = 0;
  GridIndex source_center{};
  double source_radius = 0.0;
  std::uint32_t checksum = 0;  // CRC32 of the binary file
};

inline json to_json(const GrfHyperParams& g) {
  return {{"alpha", g.alpha},
          {"ell", g.ell},
          {"c_bg", g.c_bg},
          {"sigma_c", g.sigma_c},
          {"c_min", g.c_min},
          {"c_max", g.c_max},
          {"alpha_range", {g.alpha_range.lo, g.alpha_range.hi}},
          {"ell_range", {g.ell_range.lo, g.ell_range.hi}},
          {"max_attempts", g.max_attempts}};
}

inline GrfHyperParams grf_from_json(const json& j) {
  GrfHyperParams g;
  g.alpha = j.value("alpha", g.alpha);
  g.ell = j.value("ell", g.ell);
  g.c_bg = j.value("c_bg", g.c_bg);
  g.sigma_c = j.value("sigma_c", g.sigma_c);
  g.c_min = j.value("c_min", g.c_min);
  g.c_max = j.value("c_max", g.c_max);
  if (j.contains("alpha_range")) g.alpha_range = {j["alpha_range"][0], j["alpha_range"][1]};
  if (j.contains("ell_range")) g.ell_range = {j["ell_range"][0], j["ell_range"][1]};
  g.max_attempts = j.value("max_attempts", g.max_attempts);
  return g;
}

inline json to_json(const DatasetManifest& m) {
  return {{"format_version", m.format_version},
          {"frequency_hz", m.frequency_hz},
          {"grid", {{"height", m.shape.height}, {"width", m.shape.width}, {"rank", m.shape.rank}, {"dx", m.dx}}},
          {"grf", to_json(m.grf)},
          {"normalization", {{"mean", m.norm.mean}, {"std", m.norm.std}}},
          {"split", {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}}},
          {"root_seed", m.root_seed},
          {"record_count", m.record_count},
          {"source", {{"row", m.source_center.row}, {"col", m.source_center.col}, {"radius", m.source_radius}}},
          {"checksum_crc32", m.checksum}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.format_version = j.at("format_version");
    m.frequency_hz = j.at("frequency_hz");
    const auto& g = j.at("grid");
    m.shape.height = g.at("height");
    m.shape.width = g.at("width");
    m.shape.rank = g.at("rank");
    m.dx = g.at("dx");
    m.grf = grf_from_json(j.at("grf"));
    m.norm = {j.at("normalization").at("mean"), j.at("normalization").at("std")};
    m.split = {j.at("split").at("train"), j.at("split").at("val"), j.at("split").at("test")};
    m.root_seed = j.at("root_seed");
    m.record_count = j.at("record_count");
    m.source_center = {j.at("source").at("row"), j.at("source").at("col")};
    m.source_radius = j.at("source").at("radius");
    m.checksum = j.at("checksum_crc32");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt_dataset, std::string("malformed manifest: ") + e.what());
  }
}

inline std::filesystem::path manifest_path(const std::filesystem::path& data) {
  return std::filesystem::path(data.string() + ".json");
}

inline std::size_t dataset_file_size(std::size_t records, std::size_t points) {
  return 8 + records * (8 + 4 * points * 8);
}

/// Writes records and the manifest sidecar (`<path>.json`). Fills in the record
/// count and checksum of the returned manifest.
inline DatasetManifest write_dataset(const std::vector<DatasetRecord>& records, DatasetManifest manifest,
                                     const std::filesystem::path& path) {
  const std::size_t P = manifest.shape.size();
  require(P > 0, "write_dataset: empty grid");
  require(manifest.split.total() == records.size(), "write_dataset: split sizes must sum to the record count");
  std::string buf(kDatasetMagic, 8);
  buf.reserve(dataset_file_size(records.size(), P));
  for (const auto& r : records) {
    require(r.c.size() == P && r.mask.size() == P && r.u.size() == P, "write_dataset: records must share the grid");
    detail::put(buf, r.index);
    detail::put_doubles(buf, r.c.data(), P);
    detail::put_doubles(buf, r.mask.data(), P);
    for (const auto& v : r.u) detail::put(buf, v.real());
    for (const auto& v : r.u) detail::put(buf, v.imag());
  }
  manifest.format_version = kFormatVersion;
  manifest.record_count = records.size();
  manifest.checksum = crc32_of(buf.data(), buf.size());
  write_file(path, buf);
  write_file(manifest_path(path), to_json(manifest).dump(2) + "\n");
  return manifest;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetRecord> records;
};

inline Dataset read_dataset(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kDatasetMagic, 8) != 0)
    throw Error(ErrorKind::unsupported_format, path.string() + " is not a dataset file");
  Dataset d;
  d.manifest = manifest_from_json(json::parse(read_file(manifest_path(path)), nullptr, false));
  const auto& m = d.manifest;
  if (m.format_version != kFormatVersion)
    throw Error(ErrorKind::unsupported_format, "dataset format version " + std::to_string(m.format_version));
  if (m.record_count != m.split.total())
    throw Error(ErrorKind::corrupt_dataset, "manifest split sizes do not sum to the record count");
  const std::size_t P = m.shape.size();
  if (buf.size() != dataset_file_size(m.record_count, P))
    throw Error(ErrorKind::corrupt_dataset, "dataset has " + std::to_string(buf.size()) + " bytes, expected " +
                                                std::to_string(dataset_file_size(m.record_count, P)));
  if (crc32_of(buf.data(), buf.size()) != m.checksum)
    throw Error(ErrorKind::corrupt_dataset, "dataset checksum mismatch");
  detail::Reader rd{buf, 8, ErrorKind::corrupt_dataset};
  d.records.resize(m.record_count);
  std::vector<double> re(P), im(P);
  for (auto& r : d.records) {
    r.index = rd.get<std::uint64_t>();
    r.c.resize(P);
    r.mask.resize(P);
    rd.get_doubles(r.c.data(), P);
    rd.get_doubles(r.mask.data(), P);
    rd.get_doubles(re.data(), P);
    rd.get_doubles(im.data(), P);
    r.u.resize(P);
    for (std::size_t i = 0; i < P; ++i) r.u[i] = {re[i], im[i]};
  }
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json to_json(const nn::DenoiserConfig& c) {
  return {{"in_channels", c.in_channels}, {"length", c.length},           {"width", c.width},
          {"blocks", c.blocks},           {"context_dim", c.context_dim}, {"dilation_base", c.dilation_base}};
}

inline nn::DenoiserConfig arch_from_json(const json& j) {
  nn::DenoiserConfig c;
  c.in_channels = j.at("in_channels");
  c.length = j.at("length");
  c.width = j.at("width");
  c.blocks = j.at("blocks");
  c.context_dim = j.at("context_dim");
  c.dilation_base = j.at("dilation_base");
  return c;
}

inline json to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"lr_decay_every", t.lr_decay_every},
          {"lr_decay", t.lr_decay},
          {"ema_decay", t.ema_decay},
          {"train_steps", t.train_steps},
          {"schedule", to_string(t.schedule)},
          {"seed", t.seed}};
}

inline TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.batch_size = j.value("batch_size", t.batch_size);
  t.epochs = j.value("epochs", t.epochs);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.lr_decay_every = j.value("lr_decay_every", t.lr_decay_every);
  t.lr_decay = j.value("lr_decay", t.lr_decay);
  t.ema_decay = j.value("ema_decay", t.ema_decay);
  t.train_steps = j.value("train_steps", t.train_steps);
  t.schedule = parse_schedule_kind(j.value("schedule", std::string("cosine")));
  t.seed = j.value("seed", t.seed);
  return t;
}

inline json to_json(const ScheduleParams& p) {
  return {{"beta_min", p.beta_min},
          {"beta_max", p.beta_max},
          {"cosine_offset", p.cosine_offset},
          {"beta_clip", p.beta_clip}};
}

inline ScheduleParams schedule_params_from_json(const json& j) {
  ScheduleParams p;
  p.beta_min = j.value("beta_min", p.beta_min);
  p.beta_max = j.value("beta_max", p.beta_max);
  p.cosine_offset = j.value("cosine_offset", p.cosine_offset);
  p.beta_clip = j.value("beta_clip", p.beta_clip);
  return p;
}

inline json checkpoint_header(const Checkpoint& ck) {
  json log = json::array();
  for (const auto& e : ck.log)
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.learning_rate}});
  return {{"format_version", kFormatVersion},
          {"objective", to_string(ck.objective)},
          {"architecture", to_json(ck.params.config)},
          {"parameter_count", ck.params.values.size()},
          {"ema_decay", ck.params.ema_decay},
          {"train", to_json(ck.train)},
          {"schedule", to_json(ck.schedule_params)},
          {"x0_clip", std::isfinite(ck.x0_clip) ? json(ck.x0_clip) : json(nullptr)},
          {"normalization", {{"mean", ck.norm.mean}, {"std", ck.norm.std}}},
          {"log", log}};
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  ck.params.validate();
  const std::string header = checkpoint_header(ck).dump();
  std::string buf(kCheckpointMagic, 8);
  detail::put(buf, std::uint64_t(header.size()));
  buf += header;
  detail::put(buf, std::uint64_t(ck.params.values.size()));
  detail::put_doubles(buf, ck.params.values.data(), ck.params.values.size());
  detail::put_doubles(buf, ck.params.ema.data(), ck.params.ema.size());
  detail::put(buf, crc32_of(buf.data(), buf.size()));
  write_file(path, buf);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw Error(ErrorKind::unsupported_format, path.string() + " is not a checkpoint file");
  if (buf.size() < 8 + 8 + 8 + 4) throw Error(ErrorKind::corrupt_checkpoint, "checkpoint truncated");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (crc32_of(buf.data(), buf.size() - 4) != stored)
    throw Error(ErrorKind::corrupt_checkpoint, "checkpoint checksum mismatch");

  detail::Reader rd{buf, 8, ErrorKind::corrupt_checkpoint};
  const auto hlen = rd.get<std::uint64_t>();
  rd.need(hlen);
  const json h = json::parse(buf.substr(rd.pos, hlen), nullptr, false);
  rd.pos += hlen;
  if (h.is_discarded()) throw Error(ErrorKind::corrupt_checkpoint, "unreadable checkpoint header");
  if (h.value("format_version", -1) != kFormatVersion)
    throw Error(ErrorKind::unsupported_format, "checkpoint format version mismatch");

  Checkpoint ck;
  try {
    ck.objective = h.at("objective") == "regressor" ? Objective::regression : Objective::epsilon;
    ck.params = nn::DenoiserParams(arch_from_json(h.at("architecture")));
    ck.params.ema_decay = h.at("ema_decay");
    ck.train = train_from_json(h.at("train"));
    ck.schedule_params = schedule_params_from_json(h.at("schedule"));
    ck.x0_clip = detail::json_real(h.at("x0_clip"));
    ck.norm = {h.at("normalization").at("mean"), h.at("normalization").at("std")};
    for (const auto& e : h.at("log"))
      ck.log.push_back({e.at("epoch"), e.at("train_loss"), e.at("val_loss"), e.at("lr")});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corrupt_checkpoint, std::string("malformed checkpoint header: ") + e.what());
  }
  const auto count = rd.get<std::uint64_t>();
  if (count != ck.params.values.size())
    throw Error(ErrorKind::corrupt_checkpoint, "parameter payload does not match the architecture");
  rd.get_doubles(ck.params.values.data(), count);
  rd.get_doubles(ck.params.ema.data(), count);
  if (rd.pos + 4 != buf.size()) throw Error(ErrorKind::corrupt_checkpoint, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace hdl::store
