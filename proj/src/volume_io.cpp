#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "strokeseg/data_io.hpp"

namespace strokeseg {
namespace {

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

// Raw field access with optional byte swapping.
struct HeaderView {
  const std::uint8_t* p;
  bool swap;

  template <typename T>
  T get(std::size_t offset) const {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, p + offset, sizeof(T));
    if (swap) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
};

template <typename T>
T load_swapped(const std::uint8_t* p, bool swap) {
  return HeaderView{p, swap}.get<T>(0);
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  const auto bytes = bin::read_file(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
    fail(ErrorKind::kFormat, name + ": gzip-compressed NIfTI, decompress first");
  require(bytes.size() >= kNiftiHeaderSize, ErrorKind::kFormat, name + ": not NIfTI-1 (file too short)");

  HeaderView h{bytes.data(), false};
  std::int32_t sizeof_hdr = h.get<std::int32_t>(0);
  if (sizeof_hdr != 348) {
    h.swap = true;
    sizeof_hdr = h.get<std::int32_t>(0);
  }
  require(sizeof_hdr == 348, ErrorKind::kFormat, name + ": not NIfTI-1 (sizeof_hdr != 348)");
  require(std::memcmp(bytes.data() + 344, "n+1\0", 4) == 0, ErrorKind::kFormat,
          name + ": not NIfTI-1 (magic is not \"n+1\")");

  const std::int16_t ndim = h.get<std::int16_t>(40);
  require(ndim >= 1 && ndim <= 4, ErrorKind::kFormat,
          name + ": unsupported dimension count " + std::to_string(ndim));
  std::int64_t dims[4] = {1, 1, 1, 1};
  for (int i = 0; i < ndim; ++i) {
    dims[i] = h.get<std::int16_t>(42 + 2 * i);
    require(dims[i] >= 1, ErrorKind::kFormat, name + ": non-positive dimension");
  }
  require(dims[3] == 1, ErrorKind::kFormat, name + ": 4-D volumes with more than one frame are not supported");

  const std::int16_t datatype = h.get<std::int16_t>(70);
  std::size_t elem = 0;
  switch (datatype) {
    case kDtInt16: elem = 2; break;
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default:
      fail(ErrorKind::kFormat, name + ": unsupported NIfTI datatype code " + std::to_string(datatype) +
                                   " (supported: int16, float32, float64)");
  }

  Volume v;
  v.width = static_cast<int>(dims[0]);
  v.height = static_cast<int>(dims[1]);
  v.depth = static_cast<int>(dims[2]);
  for (int i = 0; i < 3; ++i) {
    const float s = h.get<float>(80 + 4 * i);  // pixdim[1..3]
    v.voxel_size[i] = s > 0 ? s : 1.f;
  }

  const float vox_offset = h.get<float>(108);
  float slope = h.get<float>(112);
  const float inter = h.get<float>(116);
  if (slope == 0.f || !std::isfinite(slope)) slope = 1.f;
  const float intercept = std::isfinite(inter) ? inter : 0.f;

  const std::size_t count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  const auto offset = static_cast<std::size_t>(std::max(vox_offset, 352.f));
  require(offset + count * elem <= bytes.size(), ErrorKind::kFormat,
          name + ": voxel data truncated");

  v.data.resize(count);
  const std::uint8_t* src = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    double raw = 0;
    switch (datatype) {
      case kDtInt16: raw = load_swapped<std::int16_t>(src + 2 * i, h.swap); break;
      case kDtFloat32: raw = load_swapped<float>(src + 4 * i, h.swap); break;
      case kDtFloat64: raw = load_swapped<double>(src + 8 * i, h.swap); break;
    }
    v.data[i] = static_cast<float>(raw * slope + intercept);
  }
  return v;
}

void write_ptf(const std::filesystem::path& path, const PtfArray& array) {
  require(array.dims.size() <= 4, ErrorKind::kInvalidArgument, "ptns: at most 4 dimensions");
  std::size_t numel = 1;
  for (auto d : array.dims) numel *= d;
  require(numel == array.data.size(), ErrorKind::kShape, "ptns: dims do not match payload length");
  bin::Writer w;
  w.str("PTNS");
  w.u32(1);
  w.u8(0);
  w.u8(static_cast<std::uint8_t>(array.dims.size()));
  for (auto d : array.dims) w.u32(d);
  for (float f : array.data) w.f32(f);
  bin::write_file(path, w.buffer());
}

PtfArray read_ptf(const std::filesystem::path& path) {
  const auto bytes = bin::read_file(path);
  const std::string name = path.string();
  bin::Reader r(bytes.data(), bytes.size(), name);
  require(bytes.size() >= 10 && r.str(4) == "PTNS", ErrorKind::kFormat, name + ": bad PTNS magic");
  const std::uint32_t version = r.u32();
  require(version == 1, ErrorKind::kFormat, name + ": unsupported PTNS version " + std::to_string(version));
  const std::uint8_t dtype = r.u8();
  require(dtype == 0, ErrorKind::kFormat, name + ": unsupported PTNS dtype " + std::to_string(dtype));
  const std::uint8_t ndim = r.u8();
  require(ndim <= 4, ErrorKind::kFormat, name + ": PTNS ndim > 4");
  PtfArray a;
  std::size_t numel = 1;
  for (int i = 0; i < ndim; ++i) {
    a.dims.push_back(r.u32());
    numel *= a.dims.back();
  }
  require(r.remaining() == numel * 4, ErrorKind::kFormat,
          name + ": payload length " + std::to_string(r.remaining()) + " bytes, expected " +
              std::to_string(numel * 4));
  a.data.resize(numel);
  for (auto& f : a.data) f = r.f32();
  return a;
}

void write_volume_ptf(const std::filesystem::path& path, const Volume& volume) {
  PtfArray a;
  a.dims = {static_cast<std::uint32_t>(volume.depth), static_cast<std::uint32_t>(volume.height),
            static_cast<std::uint32_t>(volume.width)};
  a.data = volume.data;
  write_ptf(path, a);
}

Volume read_volume_ptf(const std::filesystem::path& path) {
  PtfArray a = read_ptf(path);
  Volume v;
  if (a.dims.size() == 3) {
    v.depth = static_cast<int>(a.dims[0]);
    v.height = static_cast<int>(a.dims[1]);
    v.width = static_cast<int>(a.dims[2]);
  } else if (a.dims.size() == 2) {
    v.depth = 1;
    v.height = static_cast<int>(a.dims[0]);
    v.width = static_cast<int>(a.dims[1]);
  } else {
    fail(ErrorKind::kFormat, path.string() + ": expected a 2-D or 3-D array");
  }
  v.data = std::move(a.data);
  return v;
}

Volume read_volume(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".nii") return read_nifti(path);
  if (ext == ".ptns") return read_volume_ptf(path);
  if (ext == ".gz") fail(ErrorKind::kFormat, path.string() + ": gzip-compressed volume, decompress first");
  fail(ErrorKind::kFormat, path.string() + ": unknown volume extension (expected .nii or .ptns)");
}

}  // namespace strokeseg
