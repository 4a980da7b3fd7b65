#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxelsr/volume.hpp"

namespace voxelsr {

enum class PhantomKind { ramp, sinusoid, ellipsoids };

PhantomKind parse_phantom_kind(const std::string& name);
std::string to_string(PhantomKind kind);

struct PhantomSpec {
  PhantomKind kind = PhantomKind::sinusoid;
  Dims dims{32, 32, 32};
  Spacing base_spacing{};
  /// Empty: no noise. One entry: uniform sigma. Z entries: per-slice sigma.
  std::vector<double> noise_sigma;
  std::uint64_t seed = 0;
};

/// Deterministic synthetic volume in [0, 1] (before noise).
///
/// ramp: 0.125 + s * z with dyadic slope s <= 0.75 / (Z-1), constant per axial slice.
/// sinusoid: 0.5 + 0.4 * prod_axis sin(2*pi*i/period + phase), periods >= 8 voxels.
/// ellipsoids: 3-6 constant-intensity ellipsoids over a 0.1 background.
/// Noise is independent zero-mean Gaussian added after synthesis.
Volume make_phantom(const PhantomSpec& spec);

}  // namespace voxelsr
