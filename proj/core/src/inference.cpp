#include "voxelsr/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "voxelsr/baselines.hpp"
#include "voxelsr/error.hpp"
#include "voxelsr/metrics.hpp"
#include "voxelsr/parallel.hpp"

namespace voxelsr {

void SlidingWindowConfig::validate() const {
  if (patch.x < 3 || patch.y < 3 || patch.z < 3) throw ConfigError("sliding-window patch dims must be >= 3");
  if (!(overlap >= 0.0 && overlap <= 0.9)) throw ConfigError("sliding-window overlap must lie in [0, 0.9]");
  if (!(sigma_fraction > 0.0)) throw ConfigError("sliding-window sigma fraction must be positive");
}

HrGrid hr_grid_coords(const Dims& lr_dims, double r) {
  const Dims hr{lr_dims.x, lr_dims.y, upsampled_depth(lr_dims.z, r)};
  return {hr, CoordBatch::lattice(hr)};
}

namespace {

// `max_stride` below `size` forces neighbouring tiles to share samples.
std::vector<std::int64_t> tile_starts(std::int64_t extent, std::int64_t size, double overlap, std::int64_t max_stride) {
  const auto stride = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(size * (1.0 - overlap))), 1,
                                               std::max<std::int64_t>(1, max_stride));
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0;; s += stride) {
    if (s + size >= extent) {
      starts.push_back(extent - size);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

// Per-axis factor floored at 1e-100 so that the product of three never
// underflows to zero, even under a very sharp window.
double gaussian(double offset, double sigma) {
  return std::max(1e-100, std::exp(-offset * offset / (2.0 * sigma * sigma)));
}

}  // namespace

std::vector<Tile> plan_tiles(const Dims& lr_dims, const SlidingWindowConfig& cfg) {
  cfg.validate();
  const Dims size{std::min(cfg.patch.x, lr_dims.x), std::min(cfg.patch.y, lr_dims.y),
                  std::min(cfg.patch.z, lr_dims.z)};
  const auto xs = tile_starts(lr_dims.x, size.x, cfg.overlap, size.x);
  const auto ys = tile_starts(lr_dims.y, size.y, cfg.overlap, size.y);
  // HR slices fall between LR slices, so z tiles must share a boundary slice.
  const auto zs = tile_starts(lr_dims.z, size.z, cfg.overlap, size.z - 1);
  std::vector<Tile> tiles;
  for (auto z : zs)
    for (auto y : ys)
      for (auto x : xs) tiles.push_back({{x, y, z}, size});
  return tiles;
}

std::vector<float> stitch_tiles(const Dims& lr_dims, std::int64_t out_depth, const SlidingWindowConfig& cfg,
                                const TilePredictor& predict, std::vector<double>* weight_map) {
  if (out_depth < 1 || (out_depth > 1 && lr_dims.z < 2)) throw ShapeError("stitch_tiles: invalid output depth");
  const auto tiles = plan_tiles(lr_dims, cfg);
  const Dims out_dims{lr_dims.x, lr_dims.y, out_depth};
  std::vector<double> acc(static_cast<std::size_t>(out_dims.count()), 0.0);
  std::vector<double> weight(acc.size(), 0.0);

  // Output slice k sits at LR position k*(Z-1)/(out_depth-1).
  const std::int64_t num = lr_dims.z - 1;
  const std::int64_t den = std::max<std::int64_t>(out_depth - 1, 1);
  auto position = [&](std::int64_t k) {
    return out_depth > 1 ? static_cast<double>(k * num) / static_cast<double>(den) : 0.0;
  };

  struct TileQueries {
    std::vector<std::int64_t> out_index;
    std::vector<double> weight;
    CoordBatch coords;
  };
  auto build_queries = [&](const Tile& t) {
    TileQueries q;
    const auto z_lo = t.origin.z, z_hi = t.origin.z + t.size.z - 1;
    const double sx = cfg.sigma_fraction * static_cast<double>(t.size.x);
    const double sy = cfg.sigma_fraction * static_cast<double>(t.size.y);
    const double sz = cfg.sigma_fraction * static_cast<double>(t.size.z);
    const double cx = 0.5 * static_cast<double>(t.size.x - 1);
    const double cy = 0.5 * static_cast<double>(t.size.y - 1);
    const double cz = 0.5 * static_cast<double>(t.size.z - 1);
    std::vector<CoordBatch::Point> pts;
    for (std::int64_t k = 0; k < out_depth; ++k) {
      // Exact rational containment test: z_lo <= k*num/den <= z_hi.
      if (out_depth > 1 && (k * num < z_lo * den || k * num > z_hi * den)) continue;
      if (out_depth == 1 && z_lo != 0) continue;
      const double local_z = position(k) - static_cast<double>(z_lo);
      const double nz = t.size.z > 1 ? std::clamp(-1.0 + 2.0 * local_z / static_cast<double>(t.size.z - 1), -1.0, 1.0) : 0.0;
      const double wz = gaussian(local_z - cz, sz);
      for (std::int64_t y = 0; y < t.size.y; ++y) {
        const double wy = gaussian(static_cast<double>(y) - cy, sy);
        for (std::int64_t x = 0; x < t.size.x; ++x) {
          pts.push_back({index_to_normalized(static_cast<double>(x), t.size.x),
                         index_to_normalized(static_cast<double>(y), t.size.y), nz});
          q.out_index.push_back((t.origin.x + x) + lr_dims.x * ((t.origin.y + y) + lr_dims.y * k));
          q.weight.push_back(gaussian(static_cast<double>(x) - cx, sx) * wy * wz);
        }
      }
    }
    q.coords = CoordBatch(std::move(pts));
    return q;
  };

  // Tiles are evaluated in parallel batches; accumulation stays in tile order.
  const std::size_t batch = std::max<std::size_t>(1, worker_threads());
  for (std::size_t first = 0; first < tiles.size(); first += batch) {
    const std::size_t count = std::min(batch, tiles.size() - first);
    std::vector<TileQueries> queries(count);
    std::vector<std::vector<float>> preds(count);
    parallel_for(count, [&](std::size_t i) {
      queries[i] = build_queries(tiles[first + i]);
      preds[i] = queries[i].coords.size() ? predict(tiles[first + i], queries[i].coords) : std::vector<float>{};
      if (preds[i].size() != queries[i].coords.size()) {
        throw ShapeError("tile predictor returned the wrong number of values");
      }
    });
    for (std::size_t i = 0; i < count; ++i) {
      const auto& q = queries[i];
      for (std::size_t n = 0; n < q.out_index.size(); ++n) {
        const auto o = static_cast<std::size_t>(q.out_index[n]);
        acc[o] += q.weight[n] * static_cast<double>(preds[i][n]);
        weight[o] += q.weight[n];
      }
    }
  }

  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(weight[i] > 0.0)) {
      throw Error("sliding-window tiling left voxel " + std::to_string(i) + " with zero accumulated weight");
    }
    out[i] = static_cast<float>(acc[i] / weight[i]);
  }
  if (weight_map) *weight_map = std::move(weight);
  return out;
}

Volume predict_lattice(const Volume& v, const ModelParams<float>& params, std::int64_t out_depth,
                       const SlidingWindowConfig& cfg) {
  const auto& d = v.dims();
  auto predictor = [&](const Tile& t, const CoordBatch& coords) {
    NoGradGuard no_grad;
    const auto patch = crop(v, t.origin, t.size);
    const auto pred = forward<float>(patch, coords, params);
    return std::vector<float>(pred.data().begin(), pred.data().end());
  };
  auto voxels = stitch_tiles(d, out_depth, cfg, predictor);
  for (float f : voxels) {
    if (!std::isfinite(f)) throw NumericalError("model produced non-finite intensities");
  }
  Spacing sp = v.spacing();
  if (out_depth > 1 && d.z > 1) {
    sp.z = static_cast<float>(sp.z * static_cast<double>(d.z - 1) / static_cast<double>(out_depth - 1));
  }
  return Volume({d.x, d.y, out_depth}, sp, std::move(voxels));
}

Volume super_resolve(const Volume& v, const ModelParams<float>& params, double r, const SlidingWindowConfig& cfg) {
  if (v.dims().z < 2) throw ShapeError("super_resolve: need at least 2 slices");
  return predict_lattice(v, params, upsampled_depth(v.dims().z, r), cfg);
}

Method parse_method(const std::string& name) {
  if (name == "cubic") return Method::cubic;
  if (name == "trilinear") return Method::trilinear;
  if (name == "cycleinr") return Method::cycleinr;
  throw ConfigError("unknown method '" + name + "' (expected cubic, trilinear or cycleinr)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::cubic: return "cubic";
    case Method::trilinear: return "trilinear";
    case Method::cycleinr: return "cycleinr";
  }
  return "unknown";
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << csv_header() << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << format_number(r.scale) << ',' << format_number(r.psnr_db) << ','
       << format_number(r.ssim) << ',' << format_number(r.snli) << ',' << format_number(r.runtime_s) << '\n';
  }
  return os.str();
}

EvalRow evaluate(const std::string& method, double scale, const Volume& ref, const Volume& test, double data_range) {
  EvalRow row;
  row.method = method;
  row.scale = scale;
  row.psnr_db = psnr(ref, test, data_range);
  row.ssim = ssim(ref, test, data_range);
  row.snli = snli(test).snli;
  return row;
}

EvalReport compare_methods(const Volume& lr, const Volume& hr_ref, const std::vector<Method>& methods,
                           const CompareOptions& options) {
  const auto& ld = lr.dims();
  const auto& hd = hr_ref.dims();
  if (ld.x != hd.x || ld.y != hd.y || ld.z < 2 || hd.z <= ld.z) {
    throw ShapeError("compare_methods: reference grid is not a z-upsampling of the LR grid");
  }
  const double r = static_cast<double>(hd.z - 1) / static_cast<double>(ld.z - 1);
  if (upsampled_depth(ld.z, r) != hd.z) throw ShapeError("compare_methods: grid mismatch after resampling");

  EvalReport report;
  for (auto m : methods) {
    const auto start = std::chrono::steady_clock::now();
    Volume out;
    switch (m) {
      case Method::cubic: out = upsample_z_cubic(lr, r); break;
      case Method::trilinear: out = upsample_z_linear(lr, r); break;
      case Method::cycleinr:
        if (!options.model) throw ConfigError("compare_methods: cycleinr requires a model");
        out = super_resolve(lr, *options.model, r, options.window);
        break;
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    if (out.dims() != hd) throw ShapeError("compare_methods: grid mismatch after resampling");
    auto row = evaluate(to_string(m), r, hr_ref, out, options.data_range);
    row.runtime_s = options.record_runtime ? elapsed.count() : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace voxelsr
