#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voxelsr/model.hpp"
#include "voxelsr/volume.hpp"

namespace voxelsr {

struct SlidingWindowConfig {
  Dims patch{32, 32, 8};          // tile extent in LR voxels
  double overlap = 0.5;           // fraction of the tile shared with its neighbour
  double sigma_fraction = 1.0 / 8.0;  // Gaussian sigma per axis, relative to tile extent

  void validate() const;
};

struct HrGrid {
  Dims dims;
  CoordBatch coords;  // full HR lattice in the LR volume's normalized frame
};

/// HR lattice for upsampling factor r > 1; depth round((Z-1)*r)+1.
HrGrid hr_grid_coords(const Dims& lr_dims, double r);

/// One tile of the sliding window, in LR voxel units.
struct Tile {
  Dims origin;
  Dims size;
};

/// Tile placement: stride patch*(1-overlap) (at most patch-1 along z so that
/// HR slices between tiles stay covered), final tile flush with the far
/// edge, tiles clamped to the volume. Returned in canonical (z, y, x) order.
std::vector<Tile> plan_tiles(const Dims& lr_dims, const SlidingWindowConfig& cfg);

/// Produces one prediction per query (same order) for a tile. `coords` are in
/// the tile's own normalized frame.
using TilePredictor = std::function<std::vector<float>(const Tile& tile, const CoordBatch& coords)>;

/// Gaussian-weighted stitching of per-tile predictions onto an X x Y x out_depth
/// lattice aligned with the LR volume. Accumulation is in canonical tile order.
/// If `weight_map` is given it receives the accumulated window weights.
std::vector<float> stitch_tiles(const Dims& lr_dims, std::int64_t out_depth, const SlidingWindowConfig& cfg,
                                const TilePredictor& predict, std::vector<double>* weight_map = nullptr);

/// Model prediction on an X x Y x out_depth endpoint-aligned lattice
/// (out_depth == Z reproduces the input lattice).
Volume predict_lattice(const Volume& v, const ModelParams<float>& params, std::int64_t out_depth,
                       const SlidingWindowConfig& cfg);

/// Arbitrary-scale z super-resolution. Output z spacing is sz*(Z-1)/(Z'-1).
Volume super_resolve(const Volume& v, const ModelParams<float>& params, double r, const SlidingWindowConfig& cfg);

enum class Method { cubic, trilinear, cycleinr };
Method parse_method(const std::string& name);
std::string to_string(Method m);

struct EvalRow {
  std::string method;
  double scale = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double snli = 0.0;
  double runtime_s = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  static std::string csv_header() { return "method,scale,psnr_db,ssim,snli,runtime_s"; }
  std::string csv() const;
};

struct CompareOptions {
  const ModelParams<float>* model = nullptr;  // required for Method::cycleinr
  SlidingWindowConfig window;
  double data_range = 1.0;
  bool record_runtime = false;  // runtime_s stays 0 unless enabled (keeps reports reproducible)
};

/// PSNR / SSIM / SNLI of `test` against `ref`.
EvalRow evaluate(const std::string& method, double scale, const Volume& ref, const Volume& test,
                 double data_range = 1.0);

/// Upsamples `lr` onto `hr_ref`'s grid with each method and scores it.
EvalReport compare_methods(const Volume& lr, const Volume& hr_ref, const std::vector<Method>& methods,
                           const CompareOptions& options = {});

}  // namespace voxelsr
