#include "siatrans/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace siatrans {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void text(const std::string& s) { bytes(s.data(), s.size()); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  void bytes(void* p, std::size_t n) {
    if (pos + n > buf.size()) throw DataError("checkpoint is truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::string text(std::size_t n) {
    if (pos + n > buf.size()) throw DataError("checkpoint is truncated");
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }

  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

struct ManifestEntry {
  std::string name;
  bool trainable;
  Shape shape;
  std::uint64_t offset;
};

struct Parsed {
  std::uint64_t hash = 0;
  std::string config_text;
  std::vector<ManifestEntry> entries;
  std::size_t payload_start = 0;
  std::uint64_t count = 0;
};

Parsed parse_header(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Parsed p;
  p.hash = r.pod<std::uint64_t>();
  p.config_text = r.text(r.pod<std::uint64_t>());
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    ManifestEntry e;
    e.name = r.text(r.pod<std::uint32_t>());
    e.trainable = r.pod<std::uint8_t>() != 0;
    const auto rank = r.pod<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.pod<std::uint64_t>());
    e.offset = r.pod<std::uint64_t>();
    p.entries.push_back(std::move(e));
  }
  p.count = r.pod<std::uint64_t>();
  p.payload_start = r.pos;
  if (bytes.size() != p.payload_start + p.count * sizeof(double)) {
    throw DataError("checkpoint payload size does not match its header");
  }
  return p;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const SiaTrans& model) {
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.pod(kCheckpointVersion);
  const auto text = model.config().canonical();
  w.pod<std::uint64_t>(model.config().hash());
  w.pod<std::uint64_t>(text.size());
  w.text(text);
  const auto& entries = model.parameters().entries();
  w.pod<std::uint64_t>(entries.size());
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.text(e.name);
    w.pod<std::uint8_t>(e.trainable ? 1 : 0);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.dim()));
    for (auto d : e.tensor.shape()) w.pod<std::uint64_t>(d);
    w.pod<std::uint64_t>(offset);
    offset += e.tensor.numel();
  }
  w.pod<std::uint64_t>(offset);
  for (const auto& e : entries) w.bytes(e.tensor.data().data(), e.tensor.numel() * sizeof(double));
  return std::move(w.out);
}

void save_checkpoint(const SiaTrans& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

ModelConfig read_checkpoint_config(const std::string& path) {
  const auto p = parse_header(read_file(path));
  auto config = ModelConfig::parse(p.config_text);
  if (config.hash() != p.hash) throw DataError("checkpoint config hash does not match its config text");
  return config;
}

void load_checkpoint_into(SiaTrans& model, const std::vector<std::uint8_t>& bytes) {
  const auto p = parse_header(bytes);
  if (p.hash != model.config().hash()) {
    throw DataError("checkpoint was written for a different model config (hash mismatch)");
  }
  auto& entries = model.parameters().entries();
  if (p.entries.size() != entries.size()) throw DataError("checkpoint manifest has a different entry count");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = p.entries[i];
    auto t = entries[i].tensor;
    if (m.name != entries[i].name || m.shape != t.shape()) {
      throw DataError("checkpoint entry '" + m.name + "' does not match model entry '" + entries[i].name + "'");
    }
    if (m.offset + t.numel() > p.count) throw DataError("checkpoint entry '" + m.name + "' overruns the payload");
    std::memcpy(t.mutable_data().data(), bytes.data() + p.payload_start + m.offset * sizeof(double),
                t.numel() * sizeof(double));
  }
}

void load_checkpoint_into(SiaTrans& model, const std::string& path) { load_checkpoint_into(model, read_file(path)); }

std::unique_ptr<SiaTrans> load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  const auto p = parse_header(bytes);
  auto config = ModelConfig::parse(p.config_text);
  if (config.hash() != p.hash) throw DataError("checkpoint config hash does not match its config text");
  auto model = std::make_unique<SiaTrans>(config);
  load_checkpoint_into(*model, bytes);
  return model;
}

}  // namespace siatrans
