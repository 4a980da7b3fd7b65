#include "voxelsr/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "voxelsr/error.hpp"

namespace voxelsr {

PhantomKind parse_phantom_kind(const std::string& name) {
  if (name == "ramp") return PhantomKind::ramp;
  if (name == "sinusoid") return PhantomKind::sinusoid;
  if (name == "ellipsoids") return PhantomKind::ellipsoids;
  throw ConfigError("unknown phantom kind '" + name + "' (expected ramp, sinusoid or ellipsoids)");
}

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::ramp: return "ramp";
    case PhantomKind::sinusoid: return "sinusoid";
    case PhantomKind::ellipsoids: return "ellipsoids";
  }
  return "unknown";
}

namespace {

// Geometry and noise draw from separate streams so that toggling noise does
// not perturb the clean signal.
constexpr std::uint64_t kNoiseStream = 0x9E3779B97F4A7C15ULL;

// Slope and offset are dyadic so every slice value is exactly representable;
// linear interpolation of the ramp then reproduces it bit-exactly.
std::vector<float> ramp(const Dims& d) {
  double step = 1.0;
  while (step * static_cast<double>(d.z - 1) > 0.75) step *= 0.5;
  std::vector<float> out(static_cast<std::size_t>(d.count()));
  for (std::int64_t z = 0; z < d.z; ++z) {
    const auto value = static_cast<float>(0.125 + step * static_cast<double>(z));
    std::fill_n(out.begin() + z * d.slice_area(), d.slice_area(), value);
  }
  return out;
}

std::vector<float> sinusoid(const Dims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_axis = [&](std::int64_t n) {
    const double lo = std::max(8.0, 0.5 * static_cast<double>(n));
    const double hi = std::max(8.0, static_cast<double>(n));
    const double period = lo + (hi - lo) * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    std::vector<double> f(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * std::numbers::pi * i / period + phase);
    return f;
  };
  const auto fx = draw_axis(d.x);
  const auto fy = draw_axis(d.y);
  const auto fz = draw_axis(d.z);
  std::vector<float> out(static_cast<std::size_t>(d.count()));
  std::size_t k = 0;
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) out[k++] = static_cast<float>(0.5 + 0.4 * fx[x] * fy[y] * fz[z]);
  return out;
}

std::vector<float> ellipsoids(const Dims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count_dist(3, 6);
  std::vector<float> out(static_cast<std::size_t>(d.count()), 0.1F);
  const int count = count_dist(rng);
  for (int e = 0; e < count; ++e) {
    const double extent[3] = {static_cast<double>(d.x), static_cast<double>(d.y), static_cast<double>(d.z)};
    double center[3], radius[3];
    for (int a = 0; a < 3; ++a) {
      radius[a] = std::max(1.0, (0.1 + 0.25 * unit(rng)) * extent[a]);
      center[a] = (0.2 + 0.6 * unit(rng)) * (extent[a] - 1.0);
    }
    const auto value = static_cast<float>(0.3 + 0.6 * unit(rng));
    std::size_t k = 0;
    for (std::int64_t z = 0; z < d.z; ++z)
      for (std::int64_t y = 0; y < d.y; ++y)
        for (std::int64_t x = 0; x < d.x; ++x, ++k) {
          const double u = (x - center[0]) / radius[0];
          const double v = (y - center[1]) / radius[1];
          const double w = (z - center[2]) / radius[2];
          if (u * u + v * v + w * w <= 1.0) out[k] = value;
        }
  }
  return out;
}

}  // namespace

Volume make_phantom(const PhantomSpec& spec) {
  const auto& d = spec.dims;
  if (d.x <= 0 || d.y <= 0 || d.z <= 0) throw ConfigError("phantom dims must be positive");
  if (spec.noise_sigma.size() > 1 && static_cast<std::int64_t>(spec.noise_sigma.size()) != d.z) {
    throw ConfigError("per-slice noise list has " + std::to_string(spec.noise_sigma.size()) +
                      " entries, expected Z = " + std::to_string(d.z));
  }
  for (double s : spec.noise_sigma) {
    if (!(s >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<float> voxels;
  switch (spec.kind) {
    case PhantomKind::ramp: voxels = ramp(d); break;
    case PhantomKind::sinusoid: voxels = sinusoid(d, rng); break;
    case PhantomKind::ellipsoids: voxels = ellipsoids(d, rng); break;
  }

  if (!spec.noise_sigma.empty()) {
    std::mt19937_64 noise_rng(spec.seed ^ kNoiseStream);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::int64_t z = 0; z < d.z; ++z) {
      const double sigma = spec.noise_sigma.size() == 1 ? spec.noise_sigma[0] : spec.noise_sigma[z];
      float* s = voxels.data() + z * d.slice_area();
      for (std::int64_t i = 0; i < d.slice_area(); ++i) {
        s[i] = static_cast<float>(s[i] + sigma * gauss(noise_rng));
      }
    }
  }
  return Volume(d, spec.base_spacing, std::move(voxels));
}

}  // namespace voxelsr
