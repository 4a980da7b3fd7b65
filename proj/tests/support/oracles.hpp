#pragma once

// Independent 64-bit reference implementations used to check the library.
// Nothing here calls into voxelsr's numerical code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace voxelsr::testing {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Six nested loops of textbook cross-correlation, one batch element.
/// input [C][D][H][W], kernel [K][C][kd][kh][kw].
inline std::vector<double> conv3d_direct(const std::vector<double>& in, std::int64_t c, std::int64_t d, std::int64_t h,
                                         std::int64_t w, const std::vector<double>& kernel, std::int64_t k,
                                         std::int64_t kd, std::int64_t kh, std::int64_t kw,
                                         const std::vector<double>& bias, std::array<std::int64_t, 3> pad) {
  const auto od = d + 2 * pad[0] - kd + 1, oh = h + 2 * pad[1] - kh + 1, ow = w + 2 * pad[2] - kw + 1;
  std::vector<double> out(static_cast<std::size_t>(k * od * oh * ow));
  for (std::int64_t o = 0; o < k; ++o)
    for (std::int64_t z = 0; z < od; ++z)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
          double acc = bias[o];
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t a = 0; a < kd; ++a)
              for (std::int64_t b = 0; b < kh; ++b)
                for (std::int64_t e = 0; e < kw; ++e) {
                  const auto iz = z + a - pad[0], iy = y + b - pad[1], ix = x + e - pad[2];
                  if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  acc += in[((ci * d + iz) * h + iy) * w + ix] * kernel[(((o * c + ci) * kd + a) * kh + b) * kw + e];
                }
          out[((o * od + z) * oh + y) * ow + x] = acc;
        }
  return out;
}

/// y = W x + b for one row.
inline std::vector<double> affine(const std::vector<double>& w, const std::vector<double>& b,
                                  const std::vector<double>& x) {
  const std::size_t out = b.size(), in = x.size();
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

inline std::vector<double> softmax64(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (y[i] = std::exp(x[i] - mx));
  for (auto& v : y) v /= total;
  return y;
}

/// Grid of per-voxel codes, x fastest, for the sampling oracles.
struct CodeGrid {
  std::int64_t nx, ny, nz, f;
  std::vector<double> codes;  // [nz][ny][nx][f]

  const double* at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return codes.data() + ((z * ny + y) * nx + x) * f;
  }
};

/// Volume-weighted sampling: each of the 8 corners weighted by the volume of the
/// cuboid spanned by the query and the diagonally opposite corner.
inline std::vector<double> trilinear_oracle(const CodeGrid& g, const std::array<double, 3>& c) {
  const std::int64_t n[3] = {g.nx, g.ny, g.nz};
  double pos[3];
  std::int64_t base[3];
  for (int a = 0; a < 3; ++a) {
    pos[a] = (c[a] + 1.0) / 2.0 * static_cast<double>(n[a] - 1);
    base[a] = std::min<std::int64_t>(static_cast<std::int64_t>(pos[a]), n[a] - 2);
  }
  std::vector<double> out(static_cast<std::size_t>(g.f), 0.0);
  double total = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    std::int64_t idx[3];
    double vol = 1.0;
    for (int a = 0; a < 3; ++a) {
      idx[a] = base[a] + ((corner >> a) & 1);
      // Opposite corner coordinate along this axis.
      const double opposite = static_cast<double>(base[a] + 1 - ((corner >> a) & 1));
      vol *= std::abs(pos[a] - opposite);
    }
    total += vol;
    const double* code = g.at(idx[0], idx[1], idx[2]);
    for (std::int64_t i = 0; i < g.f; ++i) out[i] += vol * code[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

struct AttentionWeights {
  std::vector<double> wq, bq, wk, bk, wv, bv;
};

/// Direct loop attention over the 3x3x3 clamped neighbourhood of the nearest voxel.
inline std::vector<double> attention_oracle(const CodeGrid& g, const std::array<double, 3>& c,
                                            const AttentionWeights& w, std::vector<double>* weights_out = nullptr) {
  const auto initial = trilinear_oracle(g, c);
  const auto q = affine(w.wq, w.bq, initial);
  const std::int64_t n[3] = {g.nx, g.ny, g.nz};
  std::int64_t centre[3];
  for (int a = 0; a < 3; ++a) {
    const double pos = (c[a] + 1.0) / 2.0 * static_cast<double>(n[a] - 1);
    const double fl = std::floor(pos);
    centre[a] = static_cast<std::int64_t>(pos - fl > 0.5 ? fl + 1 : fl);
  }
  std::vector<std::vector<double>> keys, values;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const auto x = std::clamp<std::int64_t>(centre[0] + dx, 0, g.nx - 1);
        const auto y = std::clamp<std::int64_t>(centre[1] + dy, 0, g.ny - 1);
        const auto z = std::clamp<std::int64_t>(centre[2] + dz, 0, g.nz - 1);
        std::vector<double> code(g.at(x, y, z), g.at(x, y, z) + g.f);
        keys.push_back(affine(w.wk, w.bk, code));
        values.push_back(affine(w.wv, w.bv, code));
      }
  std::vector<double> logits;
  for (const auto& k : keys) {
    double dot = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) dot += q[i] * k[i];
    logits.push_back(dot);
  }
  const auto a = softmax64(logits);
  if (weights_out) *weights_out = a;
  std::vector<double> out(values[0].size(), 0.0);
  for (std::size_t j = 0; j < values.size(); ++j)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[j] * values[j][i];
  return out;
}

/// Layer-by-layer decoder MLP with the layer-4 input-projection residual.
inline double mlp_oracle(const std::vector<double>& input, const std::vector<std::vector<double>>& fc_w,
                         const std::vector<std::vector<double>>& fc_b, const std::vector<double>& res_w,
                         const std::vector<double>& res_b) {
  std::vector<double> h = input;
  for (std::size_t l = 0; l < fc_w.size(); ++l) {
    h = affine(fc_w[l], fc_b[l], h);
    if (l + 1 == fc_w.size()) break;
    for (auto& v : h) v = std::max(0.0, v);
    if (l == 3) {
      const auto r = affine(res_w, res_b, input);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += r[i];
    }
  }
  return h[0];
}

/// SSIM of one slice by visiting every 11x11 window and summing its
/// Gaussian-weighted moments directly.
inline double ssim_bruteforce(const std::vector<double>& a, const std::vector<double>& b, std::int64_t w,
                              std::int64_t h, double range = 1.0) {
  double g[11][11];
  double gsum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gsum += (g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5)));
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0.0;
  std::int64_t windows = 0;
  for (std::int64_t y0 = 0; y0 + 11 <= h; ++y0)
    for (std::int64_t x0 = 0; x0 + 11 <= w; ++x0) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / gsum;
          mx += wt * a[(y0 + i) * w + x0 + j];
          my += wt * b[(y0 + i) * w + x0 + j];
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / gsum;
          const double dx = a[(y0 + i) * w + x0 + j] - mx;
          const double dy = b[(y0 + i) * w + x0 + j] - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cov += wt * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

/// Central difference of f along one coordinate of `x`, step h.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-3) {
  const double saved = x;
  x = saved + h;
  const double plus = f();
  x = saved - h;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2.0 * h);
}

/// Relative error with a small absolute floor so vanishing gradients compare sanely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace voxelsr::testing
