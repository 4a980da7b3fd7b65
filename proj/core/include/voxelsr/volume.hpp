#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace voxelsr {

struct Dims {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  std::int64_t count() const { return x * y * z; }
  std::int64_t slice_area() const { return x * y; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Voxel spacing in millimetres.
struct Spacing {
  float x = 1.0F;
  float y = 1.0F;
  float z = 1.0F;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Dense scalar volume, x fastest and z slowest. Immutable once built.
class Volume {
 public:
  Volume() = default;
  /// Throws ShapeError on nonpositive dims, wrong voxel count, nonpositive
  /// spacing, or non-finite intensities.
  Volume(Dims dims, Spacing spacing, std::vector<float> voxels);

  static Volume filled(Dims dims, Spacing spacing, float value);

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::span<const float> voxels() const noexcept { return voxels_; }
  bool empty() const noexcept { return voxels_.empty(); }

  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + dims_.x * (y + dims_.y * z));
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return voxels_[index(x, y, z)]; }
  /// Axial slice t as a row-major X*Y span.
  std::span<const float> slice(std::int64_t t) const {
    return std::span<const float>(voxels_).subspan(static_cast<std::size_t>(t * dims_.slice_area()),
                                                   static_cast<std::size_t>(dims_.slice_area()));
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> voxels_;
};

/// Endpoint-aligned normalized coordinate: index 0 -> -1, index size-1 -> +1.
/// A single-sample axis maps to 0.
inline double index_to_normalized(double index, std::int64_t size) {
  return size > 1 ? -1.0 + 2.0 * index / static_cast<double>(size - 1) : 0.0;
}

/// Inverse of index_to_normalized (continuous index).
inline double normalized_to_index(double coord, std::int64_t size) {
  return size > 1 ? (coord + 1.0) * 0.5 * static_cast<double>(size - 1) : 0.0;
}

// VXR1 file format.
std::vector<std::byte> encode_volume(const Volume& v);
Volume decode_volume(std::span<const std::byte> bytes);
void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

/// Clamp to [lo, hi] then map affinely onto [0, 1].
Volume normalize_intensity(const Volume& v, float lo, float hi);
/// Inverse affine map of normalize_intensity (no un-clamping).
Volume denormalize_intensity(const Volume& v, float lo, float hi);

inline constexpr float kCtWindowLo = -1024.0F;
inline constexpr float kCtWindowHi = 3071.0F;

/// Keep slices 0, k, 2k, ...; z spacing is multiplied by k.
Volume downsample_z_interval(const Volume& v, std::int64_t k);

/// Linear resampling along z onto `depth` endpoint-aligned slices.
/// Output slice j sits at source position j*(Z-1)/(depth-1).
Volume resample_z_linear(const Volume& v, std::int64_t depth);

/// Continuous-factor downsampling: depth max(2, floor((Z-1)/r)+1).
Volume downsample_z_continuous(const Volume& v, double r);

/// Axis-aligned sub-box [x0, x0+dims.x) x ... .
Volume crop(const Volume& v, Dims origin, Dims size);

}  // namespace voxelsr
