#include "voxelsr/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "voxelsr/error.hpp"
#include "voxelsr/parallel.hpp"

namespace voxelsr {
namespace {

void require_same_dims(const Volume& a, const Volume& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": volume dims differ");
  }
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Valid-mode separable Gaussian filter: output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t w, std::int64_t h,
                                 const std::array<double, kWindow>& taps) {
  const std::int64_t ow = w - kWindow + 1;
  const std::int64_t oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * img[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

// Mirror index into [0, n) without repeating the edge sample.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

std::int64_t padded_extent(std::int64_t n) {
  const std::int64_t even = n + (n % 2);
  return std::max<std::int64_t>(16, even);
}

double median_inplace(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double psnr(const Volume& ref, const Volume& test, double data_range) {
  require_same_dims(ref, test, "psnr");
  if (!(data_range > 0.0)) throw ConfigError("psnr: data_range must be positive");
  const auto a = ref.voxels();
  const auto b = test.voxels();
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim_slice(std::span<const float> ref, std::span<const float> test, std::int64_t width,
                  std::int64_t height, double data_range) {
  if (width < kWindow || height < kWindow) {
    throw ShapeError("ssim: slice " + std::to_string(width) + "x" + std::to_string(height) +
                     " is smaller than the 11x11 window");
  }
  const auto n = static_cast<std::size_t>(width * height);
  if (ref.size() != n || test.size() != n) throw ShapeError("ssim: slice size mismatch");

  static const auto taps = gaussian_taps();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = ref[i];
    y[i] = test[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, width, height, taps);
  const auto my = filter_valid(y, width, height, taps);
  const auto mxx = filter_valid(xx, width, height, taps);
  const auto myy = filter_valid(yy, width, height, taps);
  const auto mxy = filter_valid(xy, width, height, taps);

  const double c1 = (kK1 * data_range) * (kK1 * data_range);
  const double c2 = (kK2 * data_range) * (kK2 * data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const Volume& ref, const Volume& test, double data_range) {
  require_same_dims(ref, test, "ssim");
  const auto& d = ref.dims();
  std::vector<double> per_slice(static_cast<std::size_t>(d.z));
  parallel_for(per_slice.size(), [&](std::size_t t) {
    per_slice[t] = ssim_slice(ref.slice(static_cast<std::int64_t>(t)), test.slice(static_cast<std::int64_t>(t)), d.x,
                              d.y, data_range);
  });
  double total = 0.0;
  for (double s : per_slice) total += s;
  return total / static_cast<double>(per_slice.size());
}

double estimate_noise_sigma(std::span<const float> slice, std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0 || slice.size() != static_cast<std::size_t>(width * height)) {
    throw ShapeError("estimate_noise_sigma: slice size does not match width x height");
  }
  const std::int64_t pw = padded_extent(width);
  const std::int64_t ph = padded_extent(height);
  auto at = [&](std::int64_t x, std::int64_t y) -> double {
    return slice[static_cast<std::size_t>(reflect(y, height) * width + reflect(x, width))];
  };
  std::vector<double> detail;
  detail.reserve(static_cast<std::size_t>((pw / 2) * (ph / 2)));
  for (std::int64_t y = 0; y < ph; y += 2) {
    for (std::int64_t x = 0; x < pw; x += 2) {
      // Orthonormal one-level Haar, diagonal (HH) band.
      const double hh = 0.5 * (at(x, y) - at(x + 1, y) - at(x, y + 1) + at(x + 1, y + 1));
      detail.push_back(std::abs(hh));
    }
  }
  return median_inplace(detail) / 0.6745;
}

NoiseProfile snli(const Volume& v) {
  const auto& d = v.dims();
  if (d.z < 2) throw ShapeError("snli: need at least 2 slices");
  NoiseProfile profile;
  profile.sigma.resize(static_cast<std::size_t>(d.z));
  parallel_for(profile.sigma.size(), [&](std::size_t t) {
    profile.sigma[t] = estimate_noise_sigma(v.slice(static_cast<std::int64_t>(t)), d.x, d.y);
  });
  // Shifted two-pass variance: identical estimates give exactly zero.
  const double shift = profile.sigma.front();
  const auto n = static_cast<double>(profile.sigma.size());
  double mean = 0.0;
  for (double s : profile.sigma) mean += s - shift;
  mean /= n;
  double var = 0.0;
  for (double s : profile.sigma) var += (s - shift - mean) * (s - shift - mean);
  profile.snli = std::sqrt(var / n);
  return profile;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

std::string noise_profile_csv(const NoiseProfile& profile) {
  std::ostringstream os;
  os << "slice_index,sigma_hat\n";
  for (std::size_t t = 0; t < profile.sigma.size(); ++t) os << t << ',' << format_number(profile.sigma[t]) << '\n';
  os << "snli," << format_number(profile.snli) << '\n';
  return os.str();
}

}  // namespace voxelsr
