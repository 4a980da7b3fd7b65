#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxelsr/tensor.hpp"
#include "voxelsr/volume.hpp"

namespace voxelsr {

/// Number of grid codes the attention step ensembles (a 3x3x3 block).
inline constexpr std::int64_t kNeighborCount = 27;
/// Decoder depth and the layer whose output receives the input projection.
inline constexpr std::int64_t kDecoderLayers = 8;
inline constexpr std::int64_t kDecoderResidualLayer = 4;

struct ModelConfig {
  std::int64_t code_length = 128;
  std::int64_t channels = 64;
  std::int64_t blocks = 3;
  std::int64_t layers_per_block = 6;
  std::int64_t hidden = 256;
  bool use_lam = true;

  /// Full-width architecture (the defaults).
  static ModelConfig full() { return {}; }
  /// Same topology at widths that train in minutes on one CPU core.
  static ModelConfig desk() { return {32, 16, 3, 6, 64, true}; }

  /// Voxel radius (Chebyshev) of the encoder's receptive field: one per 3x3x3 conv.
  std::int64_t receptive_radius() const { return 1 + blocks * layers_per_block; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Normalized query coordinates, every component in [-1, 1].
class CoordBatch {
 public:
  using Point = std::array<double, 3>;

  CoordBatch() = default;
  explicit CoordBatch(std::vector<Point> points);

  /// Full endpoint-aligned lattice of `dims`, x fastest.
  static CoordBatch lattice(const Dims& dims);

  void push_back(const Point& p);
  std::size_t size() const noexcept { return points_.size(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Point>& points() const noexcept { return points_; }

 private:
  std::vector<Point> points_;
};

/// Encoder weights, attention projections and decoder weights.
template <typename T>
struct ModelParams {
  ModelConfig config;
  BasicTensor<T> stem_w, stem_b;
  std::vector<BasicTensor<T>> block_w, block_b;  // blocks * layers_per_block, block-major
  BasicTensor<T> proj_w, proj_b;
  BasicTensor<T> query_w, query_b, key_w, key_b, value_w, value_b;  // defined iff config.use_lam
  std::vector<BasicTensor<T>> fc_w, fc_b;  // kDecoderLayers
  BasicTensor<T> residual_w, residual_b;

  /// Seeded initialization: He-uniform for layers followed by ReLU,
  /// 1/sqrt(fan_in) uniform otherwise, zero biases.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Canonical (checkpoint and optimizer) order.
  std::vector<std::pair<std::string, BasicTensor<T>>> named() const;

  /// Rebuild from named tensors, inferring the config. Throws ShapeError.
  static ModelParams from_named(const std::vector<std::pair<std::string, BasicTensor<T>>>& tensors);

  /// Independent copy in another precision; every tensor requires grad.
  template <typename U>
  ModelParams<U> cast() const {
    std::vector<std::pair<std::string, BasicTensor<U>>> out;
    for (const auto& [name, t] : named()) out.emplace_back(name, tensor_cast<U>(t, true));
    return ModelParams<U>::from_named(out);
  }

  /// Deep copy that shares no storage with this instance.
  ModelParams clone() const { return cast<T>(); }

  void set_requires_grad(bool value);
  void zero_grad();
};

/// Per-voxel latent codes; `codes` is [X*Y*Z, code_length] with x fastest.
template <typename T>
struct LatentGrid {
  Dims dims;
  BasicTensor<T> codes;
};

/// Codes after attention plus the [Q, 27] attention weights.
template <typename T>
struct AttendedCodes {
  BasicTensor<T> codes;
  BasicTensor<T> weights;
};

/// [1, 1, Z, Y, X] tensor view of a volume's voxels.
template <typename T>
BasicTensor<T> volume_tensor(const Volume& v);

/// Per-voxel latent codes from a [1, 1, Z, Y, X] intensity tensor. Each dim >= 3.
template <typename T>
LatentGrid<T> encode(const BasicTensor<T>& volume, const ModelParams<T>& params);

template <typename T>
LatentGrid<T> encode(const Volume& v, const ModelParams<T>& params) {
  return encode(volume_tensor<T>(v), params);
}

/// The 8 lattice corners around a coordinate and their cuboid-volume weights.
struct CornerWeights {
  std::array<std::int64_t, 8> index;
  std::array<double, 8> weight;
};
CornerWeights trilinear_corners(const Dims& dims, const CoordBatch::Point& p);

/// Flat indices of the 3x3x3 block centred on the nearest lattice voxel
/// (ties toward the lower index), clamped at the borders; z slowest.
std::array<std::int64_t, kNeighborCount> neighborhood(const Dims& dims, const CoordBatch::Point& p);

/// [Q, code_length] trilinear blend of the grid codes.
template <typename T>
BasicTensor<T> trilinear_sample(const LatentGrid<T>& grid, const CoordBatch& coords);

/// Attention-enhanced grid sampling: the trilinear code queries its 27 grid
/// neighbours (raw dot-product logits, single head).
template <typename T>
AttendedCodes<T> alcgs(const LatentGrid<T>& grid, const CoordBatch& coords, const ModelParams<T>& params);

/// [Q] intensities from the 8-layer coordinate MLP.
template <typename T>
BasicTensor<T> decode(const CoordBatch& coords, const BasicTensor<T>& codes, const ModelParams<T>& params);

/// Query codes for `coords` on an already encoded grid, then decode.
template <typename T>
BasicTensor<T> query(const LatentGrid<T>& grid, const CoordBatch& coords, const ModelParams<T>& params);

/// encode -> (alcgs | trilinear) -> decode.
template <typename T>
BasicTensor<T> forward(const BasicTensor<T>& volume, const CoordBatch& coords, const ModelParams<T>& params);

template <typename T>
BasicTensor<T> forward(const Volume& v, const CoordBatch& coords, const ModelParams<T>& params) {
  return forward(volume_tensor<T>(v), coords, params);
}

}  // namespace voxelsr
