#pragma once

#include <cstdint>

#include "voxelsr/volume.hpp"

namespace voxelsr {

/// Endpoint-aligned realization of [Z*r]: round((Z-1)*r) + 1.
std::int64_t upsampled_depth(std::int64_t z, double r);

/// Linear interpolation along z onto the upsampled_depth(Z, r) lattice.
Volume upsample_z_linear(const Volume& v, double r);

/// Catmull-Rom (a = -0.5) cubic convolution along z. Support beyond the end
/// slices comes from linearly extrapolated ghost slices. Requires Z >= 4.
Volume upsample_z_cubic(const Volume& v, double r);

}  // namespace voxelsr
