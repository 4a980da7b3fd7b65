#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxelsr/volume.hpp"

namespace voxelsr {

/// 10*log10(range^2 / MSE); +infinity for identical inputs.
double psnr(const Volume& ref, const Volume& test, double data_range = 1.0);

/// Single-scale SSIM of one width x height slice: 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, averaged over all fully-contained windows.
double ssim_slice(std::span<const float> ref, std::span<const float> test, std::int64_t width,
                  std::int64_t height, double data_range = 1.0);

/// Mean of ssim_slice over axial slices.
double ssim(const Volume& ref, const Volume& test, double data_range = 1.0);

/// Robust Gaussian noise sigma of a 2D slice from the finest Haar diagonal
/// detail band: median(|HH|) / 0.6745. Slices that are odd-sized or smaller
/// than 16x16 are reflect-padded first.
double estimate_noise_sigma(std::span<const float> slice, std::int64_t width, std::int64_t height);

struct NoiseProfile {
  std::vector<double> sigma;  // one estimate per axial slice
  double snli = 0.0;          // population standard deviation of `sigma`
};

/// Slice-wise noise level inconsistency.
NoiseProfile snli(const Volume& v);

/// CSV with header `slice_index,sigma_hat` and a trailing `snli,<value>` row.
std::string noise_profile_csv(const NoiseProfile& profile);

/// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double value);

}  // namespace voxelsr
