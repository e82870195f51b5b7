#include "strokeseg/checkpoint.hpp"

#include <cstring>

#include "binary_io.hpp"

namespace strokeseg {

namespace {
constexpr char kMagic[8] = {'A', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHashOffset = 8 + 4;
constexpr std::size_t kBodyOffset = kHashOffset + 8;

const char* type_name(BlockType t) {
  switch (t) {
    case BlockType::kF32: return "f32";
    case BlockType::kF64: return "f64";
    case BlockType::kBytes: return "bytes";
    case BlockType::kU64: return "u64";
  }
  return "?";
}

std::size_t element_size(BlockType t) {
  switch (t) {
    case BlockType::kF32: return 4;
    case BlockType::kF64:
    case BlockType::kU64: return 8;
    case BlockType::kBytes: return 1;
  }
  return 1;
}

std::size_t dims_numel(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}
}  // namespace

void Archive::push(Block b) {
  require(find(b.name) == nullptr, ErrorKind::kInvalidArgument, "archive: duplicate block " + b.name);
  require(b.name.size() < (1u << 16), ErrorKind::kInvalidArgument, "archive: block name too long");
  blocks_.push_back(std::move(b));
}

const Block* Archive::find(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return &b;
  return nullptr;
}

const Block& Archive::need(const std::string& name, BlockType type) const {
  const Block* b = find(name);
  require(b != nullptr, ErrorKind::kIncompatible, "archive: missing entry '" + name + "'");
  require(b->type == type, ErrorKind::kIncompatible,
          "archive: entry '" + name + "' has type " + type_name(b->type) + ", expected " + type_name(type));
  return *b;
}

void Archive::put_tensor(const std::string& name, const Tensor& t) {
  Block b;
  b.name = name;
  const Shape& s = t.shape();
  b.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
            static_cast<std::uint32_t>(s.w)};
  bin::Writer w;
  if constexpr (sizeof(real) == 4) {
    b.type = BlockType::kF32;
    for (std::size_t i = 0; i < t.numel(); ++i) w.f32(static_cast<float>(t[i]));
  } else {
    b.type = BlockType::kF64;
    for (std::size_t i = 0; i < t.numel(); ++i) w.f64(static_cast<double>(t[i]));
  }
  b.payload = std::move(w.buffer());
  push(std::move(b));
}

Tensor Archive::get_tensor(const std::string& name) const {
  const Block* b = find(name);
  require(b != nullptr, ErrorKind::kIncompatible, "archive: missing entry '" + name + "'");
  require((b->type == BlockType::kF32 || b->type == BlockType::kF64) && b->dims.size() == 4,
          ErrorKind::kIncompatible, "archive: entry '" + name + "' is not a 4-d tensor");
  Tensor t(Shape{static_cast<int>(b->dims[0]), static_cast<int>(b->dims[1]), static_cast<int>(b->dims[2]),
                 static_cast<int>(b->dims[3])});
  bin::Reader r(b->payload.data(), b->payload.size(), name);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<real>(b->type == BlockType::kF32 ? static_cast<double>(r.f32()) : r.f64());
  return t;
}

void Archive::put_f64(const std::string& name, const std::vector<double>& values) {
  Block b{name, BlockType::kF64, {static_cast<std::uint32_t>(values.size())}, {}};
  bin::Writer w;
  for (double v : values) w.f64(v);
  b.payload = std::move(w.buffer());
  push(std::move(b));
}

std::vector<double> Archive::get_f64(const std::string& name) const {
  const Block& b = need(name, BlockType::kF64);
  bin::Reader r(b.payload.data(), b.payload.size(), name);
  std::vector<double> out(b.payload.size() / 8);
  for (auto& v : out) v = r.f64();
  return out;
}

void Archive::put_text(const std::string& name, const std::string& text) {
  Block b{name, BlockType::kBytes, {static_cast<std::uint32_t>(text.size())}, {}};
  b.payload.assign(text.begin(), text.end());
  push(std::move(b));
}

std::string Archive::get_text(const std::string& name) const {
  const Block& b = need(name, BlockType::kBytes);
  return std::string(b.payload.begin(), b.payload.end());
}

void Archive::put_u64(const std::string& name, std::uint64_t value) {
  Block b{name, BlockType::kU64, {1}, {}};
  bin::Writer w;
  w.u64(value);
  b.payload = std::move(w.buffer());
  push(std::move(b));
}

std::uint64_t Archive::get_u64(const std::string& name) const {
  const Block& b = need(name, BlockType::kU64);
  bin::Reader r(b.payload.data(), b.payload.size(), name);
  return r.u64();
}

void Archive::put_store(const std::string& prefix, const ParamStore& store) {
  for (const auto& e : store) put_tensor(prefix + e.name, e.param.value);
}

void Archive::get_store(const std::string& prefix, ParamStore& store) const {
  // Validate everything first so a mismatch leaves the store untouched.
  std::vector<Tensor> values;
  for (const auto& e : store) {
    const std::string name = prefix + e.name;
    require(has(name), ErrorKind::kIncompatible, "archive: missing entry '" + name + "'");
    Tensor t = get_tensor(name);
    require(t.shape() == e.param.value.shape(), ErrorKind::kIncompatible,
            "archive: entry '" + name + "' has shape " + t.shape().str() + ", expected " +
                e.param.value.shape().str());
    values.push_back(std::move(t));
  }
  std::size_t i = 0;
  for (auto& e : store) e.param.value = std::move(values[i++]);
}

std::vector<std::uint8_t> Archive::serialize() const {
  bin::Writer body;
  body.u32(static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& b : blocks_) {
    body.u32(static_cast<std::uint32_t>(b.name.size()));
    body.str(b.name);
    body.u8(static_cast<std::uint8_t>(b.type));
    body.u8(static_cast<std::uint8_t>(b.dims.size()));
    for (auto d : b.dims) body.u32(d);
    body.bytes(b.payload.data(), b.payload.size());
  }
  bin::Writer out;
  out.bytes(kMagic, sizeof kMagic);
  out.u32(kCheckpointVersion);
  out.u64(bin::fnv1a(body.buffer().data(), body.buffer().size()));
  out.bytes(body.buffer().data(), body.buffer().size());
  return std::move(out.buffer());
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  require(bytes.size() >= kBodyOffset && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, ErrorKind::kFormat,
          what + ": not a checkpoint (bad magic)");
  bin::Reader head(bytes.data() + sizeof kMagic, kBodyOffset - sizeof kMagic, what);
  const std::uint32_t version = head.u32();
  require(version == kCheckpointVersion, ErrorKind::kFormat,
          what + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t hash = head.u64();
  require(hash == bin::fnv1a(bytes.data() + kBodyOffset, bytes.size() - kBodyOffset), ErrorKind::kFormat,
          what + ": integrity hash mismatch (truncated or corrupted file)");

  Archive a;
  bin::Reader r(bytes.data() + kBodyOffset, bytes.size() - kBodyOffset, what);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Block b;
    b.name = r.str(r.u32());
    const std::uint8_t type = r.u8();
    require(type <= 3, ErrorKind::kFormat, what + ": unknown block type in '" + b.name + "'");
    b.type = static_cast<BlockType>(type);
    const std::uint8_t ndim = r.u8();
    for (int d = 0; d < ndim; ++d) b.dims.push_back(r.u32());
    const std::size_t n = dims_numel(b.dims) * element_size(b.type);
    require(n <= r.remaining(), ErrorKind::kFormat, what + ": block '" + b.name + "' overruns the file");
    const std::string payload = r.str(n);
    b.payload.assign(payload.begin(), payload.end());
    a.push(std::move(b));
  }
  require(r.remaining() == 0, ErrorKind::kFormat, what + ": trailing bytes after the last block");
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  // Write then rename so readers never see a half-written checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  bin::write_file(tmp, serialize());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::kIo, "cannot move checkpoint into place at " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) { return deserialize(bin::read_file(path), path.string()); }

void import_encoder_weights(SegmentationNet& net, const Archive& archive) {
  std::string prefix;
  for (const auto& e : net.params()) {
    if (!e.name.starts_with("enc")) continue;
    if (prefix.empty() && !archive.has(e.name)) prefix = "seg/";
    break;
  }
  std::vector<std::pair<Parameter*, Tensor>> updates;
  for (auto& e : net.params()) {
    if (!e.name.starts_with("enc")) continue;
    const std::string name = prefix + e.name;
    require(archive.has(name), ErrorKind::kIncompatible, "encoder import: archive lacks '" + name + "'");
    Tensor t = archive.get_tensor(name);
    require(t.shape() == e.param.value.shape(), ErrorKind::kIncompatible,
            "encoder import: '" + name + "' has shape " + t.shape().str() + ", network expects " +
                e.param.value.shape().str());
    updates.emplace_back(&e.param, std::move(t));
  }
  for (auto& [p, t] : updates) p->value = std::move(t);
}

void import_encoder_weights(SegmentationNet& net, const std::filesystem::path& path) {
  import_encoder_weights(net, Archive::load(path));
}

}  // namespace strokeseg
