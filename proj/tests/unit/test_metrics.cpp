#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "voxelsr/error.hpp"
#include "voxelsr/metrics.hpp"
#include "voxelsr/phantom.hpp"

using namespace voxelsr;
using namespace voxelsr::testing;

namespace {

Volume random_volume(Dims d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  std::vector<float> v(static_cast<std::size_t>(d.count()));
  for (auto& x : v) x = dist(rng);
  return Volume(d, {}, std::move(v));
}

Volume scaled(const Volume& v, float c) {
  std::vector<float> out(v.voxels().begin(), v.voxels().end());
  for (auto& x : out) x *= c;
  return Volume(v.dims(), v.spacing(), out);
}

std::vector<float> gaussian_slice(std::int64_t w, std::int64_t h, double sigma, std::uint64_t seed,
                                  const std::function<double(std::int64_t, std::int64_t)>& base = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<float> s(static_cast<std::size_t>(w * h));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) s[y * w + x] = static_cast<float>((base ? base(x, y) : 0.5) + n(rng));
  return s;
}

}  // namespace

// PSNR

TEST(Psnr, IdenticalIsInfinite) {
  const auto v = random_volume({4, 4, 4}, 1);
  EXPECT_EQ(psnr(v, v), INFINITY);
}

TEST(Psnr, ConstantOffsetTwentyDb) {
  const auto a = Volume::filled({5, 5, 5}, {}, 0.f);
  const auto b = Volume::filled({5, 5, 5}, {}, 0.1f);
  EXPECT_NEAR(psnr(a, b, 1.0), 20.0, 1e-6);
}

TEST(Psnr, MatchesTwoPassOracleAndIsSymmetric) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_volume({7, 6, 5}, seed), b = random_volume({7, 6, 5}, seed + 100);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.voxels().size(); ++i) {
      const double d = static_cast<double>(a.voxels()[i]) - b.voxels()[i];
      mse += d * d;
    }
    mse /= static_cast<double>(a.voxels().size());
    const double range = 1.0 + 0.1 * static_cast<double>(seed);
    EXPECT_NEAR(psnr(a, b, range), 10.0 * std::log10(range * range / mse), 1e-6);
    EXPECT_EQ(psnr(a, b, range), psnr(b, a, range));
  }
}

TEST(Psnr, Errors) {
  EXPECT_THROW(psnr(random_volume({4, 4, 4}, 1), random_volume({4, 4, 5}, 1)), ShapeError);
  EXPECT_THROW(psnr(random_volume({4, 4, 4}, 1), random_volume({4, 4, 4}, 2), 0.0), ConfigError);
}

// SSIM

TEST(Ssim, IdenticalIsOne) {
  const auto v = random_volume({16, 16, 3}, 2);
  EXPECT_EQ(ssim(v, v), 1.0);
  std::vector<float> ramp(16 * 16 * 4);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.125f + 0.0625f * static_cast<float>(i / 256);
  const Volume r({16, 16, 4}, {}, ramp);
  EXPECT_EQ(ssim(r, r), 1.0);
}

TEST(Ssim, NegatedImageBelowOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  std::vector<float> a(16 * 16 * 2), b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) b[i] = -(a[i] = dist(rng));
  const double s = ssim(Volume({16, 16, 2}, {}, a), Volume({16, 16, 2}, {}, b));
  EXPECT_LT(s, 1.0);
}

TEST(Ssim, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_volume({32, 32, 1}, seed), b = random_volume({32, 32, 1}, seed + 50);
    const std::vector<double> da(a.voxels().begin(), a.voxels().end()), db(b.voxels().begin(), b.voxels().end());
    EXPECT_NEAR(ssim(a, b), ssim_bruteforce(da, db, 32, 32), 1e-6) << "seed " << seed;
  }
}

TEST(Ssim, CorrelatedPairMatchesOracle) {
  // Correlated content exercises the structure term away from zero.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_volume({23, 17, 1}, seed);
    std::vector<float> noisy(a.voxels().begin(), a.voxels().end());
    std::mt19937_64 rng(seed + 7);
    std::normal_distribution<float> n(0.f, 0.05f);
    for (auto& x : noisy) x = 0.8f * x + 0.1f + n(rng);
    const std::vector<double> da(a.voxels().begin(), a.voxels().end()), db(noisy.begin(), noisy.end());
    const double s = ssim_slice(a.voxels(), noisy, 23, 17, 2.0);
    EXPECT_NEAR(s, ssim_bruteforce(da, db, 23, 17, 2.0), 1e-6);
    EXPECT_GT(s, 0.5);
  }
}

TEST(Ssim, VolumeIsMeanOfSlices) {
  const auto a = random_volume({12, 14, 3}, 4), b = random_volume({12, 14, 3}, 5);
  double mean = 0.0;
  for (int z = 0; z < 3; ++z) mean += ssim_slice(a.slice(z), b.slice(z), 12, 14) / 3.0;
  EXPECT_NEAR(ssim(a, b), mean, 1e-15);
}

TEST(Ssim, Symmetric) {
  const auto a = random_volume({20, 20, 2}, 6), b = random_volume({20, 20, 2}, 7);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
}

TEST(Ssim, SliceTooSmall) {
  EXPECT_THROW(ssim(random_volume({10, 20, 2}, 1), random_volume({10, 20, 2}, 2)), ShapeError);
  EXPECT_THROW(ssim(random_volume({11, 11, 2}, 1), random_volume({11, 12, 2}, 2)), ShapeError);
  EXPECT_NO_THROW(ssim(random_volume({11, 11, 1}, 1), random_volume({11, 11, 1}, 2)));
}

// Noise estimator

TEST(NoiseSigma, ConstantSliceIsZero) {
  std::vector<float> s(64 * 48, 0.37f);
  EXPECT_EQ(estimate_noise_sigma(s, 64, 48), 0.0);
}

TEST(NoiseSigma, HaarDiagonalByHand) {
  // Checkerboard +-1: every HH coefficient is (1+1+1+1)/2 = 2 -> 2 / 0.6745.
  std::vector<float> s(16 * 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) s[y * 16 + x] = ((x + y) % 2) ? -1.f : 1.f;
  EXPECT_NEAR(estimate_noise_sigma(s, 16, 16), 2.0 / 0.6745, 1e-12);
}

TEST(NoiseSigma, GaussianCalibration) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) total += estimate_noise_sigma(gaussian_slice(256, 256, 0.05, seed), 256, 256);
  EXPECT_NEAR(total / 100.0, 0.05, 0.05 * 0.05);
}

TEST(NoiseSigma, SmoothSignalLeakageBounded) {
  const double pi = std::acos(-1.0);
  auto base = [&](std::int64_t x, std::int64_t y) {
    return 0.5 + 0.3 * std::sin(2 * pi * x / 16.0) * std::sin(2 * pi * y / 20.0);
  };
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) total += estimate_noise_sigma(gaussian_slice(128, 128, 0.05, seed, base), 128, 128);
  EXPECT_NEAR(total / 20.0, 0.05, 0.05 * 0.15);
}

TEST(NoiseSigma, OddAndSmallSlicesArePadded) {
  const auto s = gaussian_slice(15, 9, 0.05, 3);
  const double e = estimate_noise_sigma(s, 15, 9);
  EXPECT_TRUE(std::isfinite(e));
  EXPECT_GT(e, 0.0);
  EXPECT_THROW(estimate_noise_sigma(s, 15, 10), ShapeError);
}

TEST(NoiseSigma, ScaleEquivariant) {
  const auto s = gaussian_slice(64, 64, 0.05, 4);
  const double base = estimate_noise_sigma(s, 64, 64);
  for (float c : {0.f, 0.25f, 2.f, 8.f}) {
    std::vector<float> t(s);
    for (auto& x : t) x *= c;
    EXPECT_EQ(estimate_noise_sigma(t, 64, 64), c * base) << c;
  }
  std::vector<float> t(s);
  for (auto& x : t) x *= 3.f;
  EXPECT_NEAR(estimate_noise_sigma(t, 64, 64), 3.0 * base, 3.0 * base * 1e-6);
}

// SNLI

TEST(Snli, IdenticalSlicesExactlyZero) {
  const auto s = gaussian_slice(40, 30, 0.07, 5);
  std::vector<float> v;
  for (int z = 0; z < 9; ++z) v.insert(v.end(), s.begin(), s.end());
  const auto p = snli(Volume({40, 30, 9}, {}, v));
  EXPECT_EQ(p.snli, 0.0);
  ASSERT_EQ(p.sigma.size(), 9u);
  for (double e : p.sigma) EXPECT_EQ(e, p.sigma[0]);
  // Appending a further duplicate keeps it at zero.
  v.insert(v.end(), s.begin(), s.end());
  EXPECT_EQ(snli(Volume({40, 30, 10}, {}, v)).snli, 0.0);
}

TEST(Snli, PopulationStandardDeviation) {
  std::vector<float> v;
  const double sig[4] = {0.01, 0.02, 0.04, 0.08};
  for (int z = 0; z < 4; ++z) {
    const auto s = gaussian_slice(64, 64, sig[z], 10 + z);
    v.insert(v.end(), s.begin(), s.end());
  }
  const auto p = snli(Volume({64, 64, 4}, {}, v));
  const double mean = std::accumulate(p.sigma.begin(), p.sigma.end(), 0.0) / 4.0;
  double var = 0.0;
  for (double e : p.sigma) var += (e - mean) * (e - mean);
  EXPECT_NEAR(p.snli, std::sqrt(var / 4.0), 1e-15);
  for (double e : p.sigma) EXPECT_GE(e, 0.0);
}

TEST(Snli, AlternatingSigmaCalibration) {
  PhantomSpec spec;
  spec.kind = PhantomKind::ramp;
  spec.dims = {64, 64, 16};
  for (int z = 0; z < 16; ++z) spec.noise_sigma.push_back(z % 2 ? 0.05 : 0.01);
  spec.seed = 21;
  EXPECT_NEAR(snli(make_phantom(spec)).snli, 0.02, 0.02 * 0.25);
}

TEST(Snli, UniformSigmaSmall) {
  PhantomSpec spec;
  spec.kind = PhantomKind::sinusoid;
  spec.dims = {64, 64, 32};
  spec.noise_sigma = {0.03};
  spec.seed = 22;
  EXPECT_LT(snli(make_phantom(spec)).snli, 0.005);
}

TEST(Snli, SliceReorderInvariant) {
  PhantomSpec spec;
  spec.kind = PhantomKind::ramp;
  spec.dims = {32, 32, 6};
  spec.noise_sigma = {0.01, 0.03, 0.02, 0.06, 0.04, 0.05};
  const auto v = make_phantom(spec);
  std::vector<float> rev;
  for (std::int64_t z = 5; z >= 0; --z) rev.insert(rev.end(), v.slice(z).begin(), v.slice(z).end());
  EXPECT_NEAR(snli(v).snli, snli(Volume(v.dims(), {}, rev)).snli, 1e-15);
}

TEST(Snli, NeedsTwoSlices) {
  EXPECT_THROW(snli(random_volume({16, 16, 1}, 1)), ShapeError);
}

TEST(Snli, ProfileCsv) {
  NoiseProfile p{{0.5, 0.25}, 0.125};
  EXPECT_EQ(noise_profile_csv(p), "slice_index,sigma_hat\n0,0.5\n1,0.25\nsnli,0.125\n");
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(20.0), "20");
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  EXPECT_EQ(format_number(NAN), "nan");
  const double x = 0.123456789012345678;
  EXPECT_EQ(std::stod(format_number(x)), x);
}
