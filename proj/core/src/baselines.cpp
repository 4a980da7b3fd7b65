#include "voxelsr/baselines.hpp"

#include <cmath>
#include <vector>

#include "voxelsr/error.hpp"

namespace voxelsr {

std::int64_t upsampled_depth(std::int64_t z, double r) {
  if (!(r > 1.0)) throw ConfigError("upsampling factor must exceed 1, got " + std::to_string(r));
  if (z < 1) throw ShapeError("upsampled_depth: need at least one slice");
  return static_cast<std::int64_t>(std::llround(static_cast<double>(z - 1) * r)) + 1;
}

Volume upsample_z_linear(const Volume& v, double r) {
  if (v.dims().z < 2) throw ShapeError("upsample_z_linear: need at least 2 slices");
  return resample_z_linear(v, upsampled_depth(v.dims().z, r));
}

namespace {

// Catmull-Rom weights for samples at offsets -1, 0, 1, 2 around fraction t.
void catmull_rom(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = -0.5 * t3 + t2 - 0.5 * t;
  w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
  w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
  w[3] = 0.5 * t3 - 0.5 * t2;
}

}  // namespace

Volume upsample_z_cubic(const Volume& v, double r) {
  const auto& d = v.dims();
  if (d.z < 4) throw ShapeError("upsample_z_cubic: need at least 4 slices, got " + std::to_string(d.z));
  const std::int64_t depth = upsampled_depth(d.z, r);
  const auto area = d.slice_area();

  // Source slice with ghost slices at -1 and Z.
  auto sample = [&](std::int64_t i, std::int64_t p) -> double {
    if (i < 0) return 2.0 * v.slice(0)[p] - v.slice(1)[p];
    if (i >= d.z) return 2.0 * v.slice(d.z - 1)[p] - v.slice(d.z - 2)[p];
    return v.slice(i)[p];
  };

  std::vector<float> out(static_cast<std::size_t>(area * depth));
  for (std::int64_t j = 0; j < depth; ++j) {
    float* dst = out.data() + j * area;
    const std::int64_t num = j * (d.z - 1);
    const std::int64_t den = depth - 1;
    const std::int64_t i0 = std::min(num / den, d.z - 1);
    const std::int64_t rem = num - i0 * den;
    if (rem == 0) {
      std::copy(v.slice(i0).begin(), v.slice(i0).end(), dst);
      continue;
    }
    double w[4];
    catmull_rom(static_cast<double>(rem) / static_cast<double>(den), w);
    for (std::int64_t p = 0; p < area; ++p) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += w[k] * sample(i0 - 1 + k, p);
      dst[p] = static_cast<float>(acc);
    }
  }
  Spacing sp = v.spacing();
  sp.z = static_cast<float>(sp.z * static_cast<double>(d.z - 1) / static_cast<double>(depth - 1));
  return Volume({d.x, d.y, depth}, sp, std::move(out));
}

}  // namespace voxelsr
