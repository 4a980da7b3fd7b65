#include "voxelsr/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "voxelsr/error.hpp"
#include "byte_io.hpp"

namespace voxelsr {

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  if (dims_.x <= 0 || dims_.y <= 0 || dims_.z <= 0) {
    throw ShapeError("volume dims must be positive, got " + std::to_string(dims_.x) + "x" +
                     std::to_string(dims_.y) + "x" + std::to_string(dims_.z));
  }
  if (static_cast<std::int64_t>(voxels_.size()) != dims_.count()) {
    throw ShapeError("voxel count " + std::to_string(voxels_.size()) + " does not match dims " +
                     std::to_string(dims_.count()));
  }
  if (!(spacing_.x > 0.0F && spacing_.y > 0.0F && spacing_.z > 0.0F)) {
    throw ShapeError("voxel spacing must be strictly positive");
  }
  for (float v : voxels_) {
    if (!std::isfinite(v)) throw ShapeError("volume contains non-finite intensities");
  }
}

Volume Volume::filled(Dims dims, Spacing spacing, float value) {
  return Volume(dims, spacing, std::vector<float>(static_cast<std::size_t>(std::max<std::int64_t>(dims.count(), 0)), value));
}

namespace {
constexpr char kVolumeMagic[4] = {'V', 'X', 'R', '1'};
constexpr std::uint32_t kDtypeF32 = 0;
constexpr std::size_t kVolumeHeaderBytes = 4 + 3 * 4 + 3 * 4 + 4;
}  // namespace

std::vector<std::byte> encode_volume(const Volume& v) {
  ByteWriter w;
  w.raw(kVolumeMagic, 4);
  w.u32(static_cast<std::uint32_t>(v.dims().x));
  w.u32(static_cast<std::uint32_t>(v.dims().y));
  w.u32(static_cast<std::uint32_t>(v.dims().z));
  w.f32(v.spacing().x);
  w.f32(v.spacing().y);
  w.f32(v.spacing().z);
  w.u32(kDtypeF32);
  for (float f : v.voxels()) w.f32(f);
  return w.take();
}

Volume decode_volume(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kVolumeMagic, 4) != 0) {
    throw FormatError("bad magic, expected VXR1", 0);
  }
  r.skip(4);
  Dims dims;
  dims.x = r.u32();
  dims.y = r.u32();
  dims.z = r.u32();
  if (dims.x == 0 || dims.y == 0 || dims.z == 0) throw FormatError("nonpositive volume dims", 4);
  Spacing spacing;
  spacing.x = r.f32();
  spacing.y = r.f32();
  spacing.z = r.f32();
  if (!(spacing.x > 0.0F && spacing.y > 0.0F && spacing.z > 0.0F)) {
    throw FormatError("nonpositive voxel spacing", 16);
  }
  const auto dtype = r.u32();
  if (dtype != kDtypeF32) throw FormatError("unsupported dtype tag " + std::to_string(dtype), 28);

  const auto count = static_cast<std::size_t>(dims.count());
  const std::size_t expected = kVolumeHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("truncated payload: expected " + std::to_string(count) + " voxels, found " +
                          std::to_string((bytes.size() - kVolumeHeaderBytes) / 4),
                      bytes.size());
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes after voxel payload", expected);
  std::vector<float> voxels(count);
  for (auto& f : voxels) f = r.f32();
  try {
    return Volume(dims, spacing, std::move(voxels));
  } catch (const ShapeError& e) {
    throw FormatError(e.what(), kVolumeHeaderBytes);
  }
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  write_file(path, encode_volume(v));
}

Volume load_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

Volume normalize_intensity(const Volume& v, float lo, float hi) {
  if (!(hi > lo)) throw ConfigError("normalize_intensity: hi must exceed lo");
  std::vector<float> out(v.voxels().begin(), v.voxels().end());
  const double range = static_cast<double>(hi) - lo;
  for (auto& x : out) {
    const double c = std::clamp(static_cast<double>(x), static_cast<double>(lo), static_cast<double>(hi));
    x = static_cast<float>((c - lo) / range);
  }
  return Volume(v.dims(), v.spacing(), std::move(out));
}

Volume denormalize_intensity(const Volume& v, float lo, float hi) {
  if (!(hi > lo)) throw ConfigError("denormalize_intensity: hi must exceed lo");
  std::vector<float> out(v.voxels().begin(), v.voxels().end());
  const double range = static_cast<double>(hi) - lo;
  for (auto& x : out) x = static_cast<float>(lo + static_cast<double>(x) * range);
  return Volume(v.dims(), v.spacing(), std::move(out));
}

Volume downsample_z_interval(const Volume& v, std::int64_t k) {
  if (k < 1) throw ConfigError("downsample_z_interval: k must be >= 1");
  const auto& d = v.dims();
  const std::int64_t depth = (d.z + k - 1) / k;
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(d.slice_area() * depth));
  for (std::int64_t t = 0; t < d.z; t += k) {
    auto s = v.slice(t);
    out.insert(out.end(), s.begin(), s.end());
  }
  Spacing sp = v.spacing();
  sp.z *= static_cast<float>(k);
  return Volume({d.x, d.y, depth}, sp, std::move(out));
}

Volume resample_z_linear(const Volume& v, std::int64_t depth) {
  const auto& d = v.dims();
  if (depth < 1) throw ConfigError("resample_z_linear: depth must be positive");
  if (depth > 1 && d.z < 2) throw ShapeError("resample_z_linear: need at least 2 source slices");
  const auto area = d.slice_area();
  std::vector<float> out(static_cast<std::size_t>(area * depth));
  for (std::int64_t j = 0; j < depth; ++j) {
    float* dst = out.data() + j * area;
    if (depth == 1) {
      std::copy(v.slice(0).begin(), v.slice(0).end(), dst);
      continue;
    }
    // Rational position j*(Z-1)/(depth-1); integer arithmetic keeps coincident
    // slices exact.
    const std::int64_t num = j * (d.z - 1);
    const std::int64_t den = depth - 1;
    const std::int64_t i0 = std::min(num / den, d.z - 1);
    const std::int64_t rem = num - i0 * den;
    if (rem == 0) {
      std::copy(v.slice(i0).begin(), v.slice(i0).end(), dst);
      continue;
    }
    const double t = static_cast<double>(rem) / static_cast<double>(den);
    auto a = v.slice(i0);
    auto b = v.slice(i0 + 1);
    for (std::int64_t i = 0; i < area; ++i) {
      dst[i] = static_cast<float>((1.0 - t) * a[i] + t * b[i]);
    }
  }
  Spacing sp = v.spacing();
  if (depth > 1) sp.z = static_cast<float>(sp.z * static_cast<double>(d.z - 1) / static_cast<double>(depth - 1));
  return Volume({d.x, d.y, depth}, sp, std::move(out));
}

Volume downsample_z_continuous(const Volume& v, double r) {
  if (!(r >= 1.0)) throw ConfigError("downsample_z_continuous: factor must be >= 1");
  const auto z = v.dims().z;
  if (z < 2) throw ShapeError("downsample_z_continuous: need at least 2 slices");
  const auto depth = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::floor(static_cast<double>(z - 1) / r)) + 1);
  return resample_z_linear(v, depth);
}

Volume crop(const Volume& v, Dims origin, Dims size) {
  const auto& d = v.dims();
  if (origin.x < 0 || origin.y < 0 || origin.z < 0 || size.x <= 0 || size.y <= 0 || size.z <= 0 ||
      origin.x + size.x > d.x || origin.y + size.y > d.y || origin.z + size.z > d.z) {
    throw ShapeError("crop box outside volume");
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(size.count()));
  for (std::int64_t z = 0; z < size.z; ++z) {
    for (std::int64_t y = 0; y < size.y; ++y) {
      const auto start = v.voxels().begin() + static_cast<std::ptrdiff_t>(v.index(origin.x, origin.y + y, origin.z + z));
      out.insert(out.end(), start, start + size.x);
    }
  }
  return Volume(size, v.spacing(), std::move(out));
}

}  // namespace voxelsr
