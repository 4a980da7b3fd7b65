#include "voxelsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "voxelsr/error.hpp"
#include "voxelsr/ops.hpp"

namespace voxelsr {

void ModelConfig::validate() const {
  if (code_length <= 0 || channels <= 0 || blocks < 0 || layers_per_block <= 0 || hidden <= 0) {
    throw ConfigError("model config: all sizes must be positive");
  }
}

CoordBatch::CoordBatch(std::vector<Point> points) : points_(std::move(points)) {
  for (const auto& p : points_) {
    for (double c : p) {
      if (!(c >= -1.0 && c <= 1.0)) throw ConfigError("query coordinate outside [-1, 1]");
    }
  }
}

void CoordBatch::push_back(const Point& p) {
  for (double c : p) {
    if (!(c >= -1.0 && c <= 1.0)) throw ConfigError("query coordinate outside [-1, 1]");
  }
  points_.push_back(p);
}

CoordBatch CoordBatch::lattice(const Dims& dims) {
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(dims.count()));
  for (std::int64_t z = 0; z < dims.z; ++z)
    for (std::int64_t y = 0; y < dims.y; ++y)
      for (std::int64_t x = 0; x < dims.x; ++x)
        pts.push_back({index_to_normalized(static_cast<double>(x), dims.x),
                       index_to_normalized(static_cast<double>(y), dims.y),
                       index_to_normalized(static_cast<double>(z), dims.z)});
  CoordBatch out;
  out.points_ = std::move(pts);
  return out;
}

namespace {

// Continuous lattice index for a normalized coordinate, clamped to the axis
// and snapped onto integers when within rounding noise of one.
double lattice_position(double coord, std::int64_t size) {
  double u = std::clamp(normalized_to_index(coord, size), 0.0, static_cast<double>(size - 1));
  const double nearest = std::round(u);
  if (std::abs(u - nearest) < 1e-9 * std::max(1.0, static_cast<double>(size))) u = nearest;
  return u;
}

template <typename T>
BasicTensor<T> uniform_tensor(const Shape& shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return BasicTensor<T>::from_data(shape, std::move(data), true);
}

template <typename T>
void expect_shape(const BasicTensor<T>& t, const Shape& shape, const std::string& name) {
  if (!t.defined()) throw ShapeError("missing parameter " + name);
  if (t.shape() != shape) {
    throw ShapeError("parameter " + name + " has shape " + shape_to_string(t.shape()) + ", expected " +
                     shape_to_string(shape));
  }
}

std::string block_name(std::int64_t b, std::int64_t l, const char* leaf) {
  return "encoder.block" + std::to_string(b) + ".conv" + std::to_string(l) + "." + leaf;
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto c = config.channels;
  const auto z = config.code_length;
  const auto h = config.hidden;
  auto he = [](std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); };
  auto plain = [](std::int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  ModelParams p;
  p.config = config;
  p.stem_w = uniform_tensor<T>({c, 1, 3, 3, 3}, plain(27), rng);
  p.stem_b = BasicTensor<T>::zeros({c}, true);
  for (std::int64_t i = 0; i < config.blocks * config.layers_per_block; ++i) {
    p.block_w.push_back(uniform_tensor<T>({c, c, 3, 3, 3}, he(27 * c), rng));
    p.block_b.push_back(BasicTensor<T>::zeros({c}, true));
  }
  p.proj_w = uniform_tensor<T>({z, c, 1, 1, 1}, plain(c), rng);
  p.proj_b = BasicTensor<T>::zeros({z}, true);
  if (config.use_lam) {
    p.query_w = uniform_tensor<T>({z, z}, plain(z), rng);
    p.query_b = BasicTensor<T>::zeros({z}, true);
    p.key_w = uniform_tensor<T>({z, z}, plain(z), rng);
    p.key_b = BasicTensor<T>::zeros({z}, true);
    p.value_w = uniform_tensor<T>({z, z}, plain(z), rng);
    p.value_b = BasicTensor<T>::zeros({z}, true);
  }
  const auto in = 3 + z;
  for (std::int64_t l = 0; l < kDecoderLayers; ++l) {
    const auto fan_in = l == 0 ? in : h;
    const auto fan_out = l + 1 == kDecoderLayers ? 1 : h;
    const double bound = l + 1 == kDecoderLayers ? plain(fan_in) : he(fan_in);
    p.fc_w.push_back(uniform_tensor<T>({fan_out, fan_in}, bound, rng));
    p.fc_b.push_back(BasicTensor<T>::zeros({fan_out}, true));
  }
  p.residual_w = uniform_tensor<T>({h, in}, plain(in), rng);
  p.residual_b = BasicTensor<T>::zeros({h}, true);
  return p;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  out.emplace_back("encoder.stem.weight", stem_w);
  out.emplace_back("encoder.stem.bias", stem_b);
  for (std::int64_t b = 0; b < config.blocks; ++b) {
    for (std::int64_t l = 0; l < config.layers_per_block; ++l) {
      const auto i = static_cast<std::size_t>(b * config.layers_per_block + l);
      out.emplace_back(block_name(b, l, "weight"), block_w[i]);
      out.emplace_back(block_name(b, l, "bias"), block_b[i]);
    }
  }
  out.emplace_back("encoder.proj.weight", proj_w);
  out.emplace_back("encoder.proj.bias", proj_b);
  if (config.use_lam) {
    out.emplace_back("attention.query.weight", query_w);
    out.emplace_back("attention.query.bias", query_b);
    out.emplace_back("attention.key.weight", key_w);
    out.emplace_back("attention.key.bias", key_b);
    out.emplace_back("attention.value.weight", value_w);
    out.emplace_back("attention.value.bias", value_b);
  }
  for (std::int64_t l = 0; l < kDecoderLayers; ++l) {
    out.emplace_back("decoder.fc" + std::to_string(l) + ".weight", fc_w[static_cast<std::size_t>(l)]);
    out.emplace_back("decoder.fc" + std::to_string(l) + ".bias", fc_b[static_cast<std::size_t>(l)]);
  }
  out.emplace_back("decoder.residual.weight", residual_w);
  out.emplace_back("decoder.residual.bias", residual_b);
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::from_named(const std::vector<std::pair<std::string, BasicTensor<T>>>& tensors) {
  std::map<std::string, BasicTensor<T>> by_name;
  for (const auto& [name, t] : tensors) {
    if (!by_name.emplace(name, t).second) throw ShapeError("duplicate parameter " + name);
  }
  auto take = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("missing parameter " + name);
    auto t = it->second;
    by_name.erase(it);
    return t;
  };

  ModelParams p;
  p.stem_w = take("encoder.stem.weight");
  if (p.stem_w.rank() != 5) throw ShapeError("encoder.stem.weight must be rank 5");
  p.proj_w = take("encoder.proj.weight");
  if (p.proj_w.rank() != 5) throw ShapeError("encoder.proj.weight must be rank 5");
  p.fc_w.push_back(take("decoder.fc0.weight"));
  if (p.fc_w[0].rank() != 2) throw ShapeError("decoder.fc0.weight must be rank 2");

  ModelConfig& cfg = p.config;
  cfg.channels = p.stem_w.dim(0);
  cfg.code_length = p.proj_w.dim(0);
  cfg.hidden = p.fc_w[0].dim(0);
  cfg.use_lam = by_name.count("attention.query.weight") > 0;
  cfg.blocks = 0;
  while (by_name.count(block_name(cfg.blocks, 0, "weight"))) ++cfg.blocks;
  cfg.layers_per_block = 0;
  if (cfg.blocks > 0) {
    while (by_name.count(block_name(0, cfg.layers_per_block, "weight"))) ++cfg.layers_per_block;
  } else {
    cfg.layers_per_block = 1;
  }
  cfg.validate();

  const auto c = cfg.channels, z = cfg.code_length, h = cfg.hidden, in = 3 + z;
  expect_shape(p.stem_w, {c, 1, 3, 3, 3}, "encoder.stem.weight");
  p.stem_b = take("encoder.stem.bias");
  expect_shape(p.stem_b, {c}, "encoder.stem.bias");
  for (std::int64_t b = 0; b < cfg.blocks; ++b) {
    for (std::int64_t l = 0; l < cfg.layers_per_block; ++l) {
      p.block_w.push_back(take(block_name(b, l, "weight")));
      expect_shape(p.block_w.back(), {c, c, 3, 3, 3}, block_name(b, l, "weight"));
      p.block_b.push_back(take(block_name(b, l, "bias")));
      expect_shape(p.block_b.back(), {c}, block_name(b, l, "bias"));
    }
  }
  expect_shape(p.proj_w, {z, c, 1, 1, 1}, "encoder.proj.weight");
  p.proj_b = take("encoder.proj.bias");
  expect_shape(p.proj_b, {z}, "encoder.proj.bias");
  if (cfg.use_lam) {
    p.query_w = take("attention.query.weight");
    p.query_b = take("attention.query.bias");
    p.key_w = take("attention.key.weight");
    p.key_b = take("attention.key.bias");
    p.value_w = take("attention.value.weight");
    p.value_b = take("attention.value.bias");
    expect_shape(p.query_w, {z, z}, "attention.query.weight");
    expect_shape(p.key_w, {z, z}, "attention.key.weight");
    expect_shape(p.value_w, {z, z}, "attention.value.weight");
    expect_shape(p.query_b, {z}, "attention.query.bias");
    expect_shape(p.key_b, {z}, "attention.key.bias");
    expect_shape(p.value_b, {z}, "attention.value.bias");
  }
  for (std::int64_t l = 0; l < kDecoderLayers; ++l) {
    const auto name = "decoder.fc" + std::to_string(l);
    if (l > 0) p.fc_w.push_back(take(name + ".weight"));
    p.fc_b.push_back(take(name + ".bias"));
    const auto fan_in = l == 0 ? in : h;
    const auto fan_out = l + 1 == kDecoderLayers ? 1 : h;
    expect_shape(p.fc_w.back(), {fan_out, fan_in}, name + ".weight");
    expect_shape(p.fc_b.back(), {fan_out}, name + ".bias");
  }
  p.residual_w = take("decoder.residual.weight");
  p.residual_b = take("decoder.residual.bias");
  expect_shape(p.residual_w, {h, in}, "decoder.residual.weight");
  expect_shape(p.residual_b, {h}, "decoder.residual.bias");
  if (!by_name.empty()) throw ShapeError("unexpected parameter " + by_name.begin()->first);
  return p;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool value) {
  for (auto& [name, t] : named()) {
    auto handle = t;
    handle.set_requires_grad(value);
  }
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& [name, t] : named()) {
    auto handle = t;
    handle.zero_grad();
  }
}

template <typename T>
BasicTensor<T> volume_tensor(const Volume& v) {
  const auto& d = v.dims();
  std::vector<T> data(v.voxels().begin(), v.voxels().end());
  return BasicTensor<T>::from_data({1, 1, d.z, d.y, d.x}, std::move(data));
}

template <typename T>
LatentGrid<T> encode(const BasicTensor<T>& volume, const ModelParams<T>& params) {
  if (volume.rank() != 5 || volume.dim(0) != 1 || volume.dim(1) != 1) {
    throw ShapeError("encode: expected a [1,1,Z,Y,X] volume tensor, got " + shape_to_string(volume.shape()));
  }
  const Dims dims{volume.dim(4), volume.dim(3), volume.dim(2)};
  if (dims.x < 3 || dims.y < 3 || dims.z < 3) {
    throw ShapeError("encode: every volume dim must be >= 3, got " + shape_to_string(volume.shape()));
  }
  const std::array<std::int64_t, 3> same{1, 1, 1};
  auto h = ops::conv3d(volume, params.stem_w, params.stem_b, same);
  const auto& cfg = params.config;
  for (std::int64_t b = 0; b < cfg.blocks; ++b) {
    auto x = h;
    for (std::int64_t l = 0; l < cfg.layers_per_block; ++l) {
      const auto i = static_cast<std::size_t>(b * cfg.layers_per_block + l);
      x = ops::relu(ops::conv3d(x, params.block_w[i], params.block_b[i], same));
    }
    h = ops::add(h, x);
  }
  auto codes = ops::conv3d(h, params.proj_w, params.proj_b, {0, 0, 0});
  // [1, Zc, Z, Y, X] -> [Zc, P] -> [P, Zc]
  codes = ops::transpose(ops::reshape(codes, {cfg.code_length, dims.count()}));
  return {dims, codes};
}

CornerWeights trilinear_corners(const Dims& dims, const CoordBatch::Point& p) {
  const std::int64_t size[3] = {dims.x, dims.y, dims.z};
  std::int64_t lo[3], hi[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double u = lattice_position(p[a], size[a]);
    lo[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), 0, std::max<std::int64_t>(size[a] - 2, 0));
    hi[a] = std::min(lo[a] + 1, size[a] - 1);
    frac[a] = std::clamp(u - static_cast<double>(lo[a]), 0.0, 1.0);
  }
  CornerWeights cw{};
  for (int k = 0; k < 8; ++k) {
    const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
    const std::int64_t x = bx ? hi[0] : lo[0];
    const std::int64_t y = by ? hi[1] : lo[1];
    const std::int64_t z = bz ? hi[2] : lo[2];
    cw.index[k] = x + dims.x * (y + dims.y * z);
    cw.weight[k] = (bx ? frac[0] : 1.0 - frac[0]) * (by ? frac[1] : 1.0 - frac[1]) * (bz ? frac[2] : 1.0 - frac[2]);
  }
  return cw;
}

std::array<std::int64_t, kNeighborCount> neighborhood(const Dims& dims, const CoordBatch::Point& p) {
  const std::int64_t size[3] = {dims.x, dims.y, dims.z};
  std::int64_t centre[3];
  for (int a = 0; a < 3; ++a) {
    const double u = lattice_position(p[a], size[a]);
    centre[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(u - 0.5)), 0, size[a] - 1);
  }
  std::array<std::int64_t, kNeighborCount> out{};
  std::size_t k = 0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const auto x = std::clamp<std::int64_t>(centre[0] + dx, 0, dims.x - 1);
        const auto y = std::clamp<std::int64_t>(centre[1] + dy, 0, dims.y - 1);
        const auto z = std::clamp<std::int64_t>(centre[2] + dz, 0, dims.z - 1);
        out[k++] = x + dims.x * (y + dims.y * z);
      }
  return out;
}

template <typename T>
BasicTensor<T> trilinear_sample(const LatentGrid<T>& grid, const CoordBatch& coords) {
  const auto q = static_cast<std::int64_t>(coords.size());
  const auto f = grid.codes.dim(1);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(q * 8));
  std::vector<T> w(static_cast<std::size_t>(q * 8));
  for (std::int64_t i = 0; i < q; ++i) {
    const auto cw = trilinear_corners(grid.dims, coords[static_cast<std::size_t>(i)]);
    for (int k = 0; k < 8; ++k) {
      idx[i * 8 + k] = cw.index[k];
      w[i * 8 + k] = static_cast<T>(cw.weight[k]);
    }
  }
  auto corners = ops::gather_rows(grid.codes, idx, {q, 8, f});
  return ops::weighted_sum(BasicTensor<T>::from_data({q, 8}, std::move(w)), corners);
}

template <typename T>
AttendedCodes<T> alcgs(const LatentGrid<T>& grid, const CoordBatch& coords, const ModelParams<T>& params) {
  if (!params.config.use_lam) throw ConfigError("alcgs: model was built without attention");
  const auto q = static_cast<std::int64_t>(coords.size());
  const auto f = grid.codes.dim(1);
  auto initial = trilinear_sample(grid, coords);
  auto query = ops::linear(initial, params.query_w, params.query_b);
  // Projecting the whole grid once is equivalent to projecting each gathered
  // neighbour, and avoids 27x redundant work.
  auto keys = ops::linear(grid.codes, params.key_w, params.key_b);
  auto values = ops::linear(grid.codes, params.value_w, params.value_b);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(q * kNeighborCount));
  for (std::int64_t i = 0; i < q; ++i) {
    const auto nb = neighborhood(grid.dims, coords[static_cast<std::size_t>(i)]);
    std::copy(nb.begin(), nb.end(), idx.begin() + i * kNeighborCount);
  }
  auto nk = ops::gather_rows(keys, idx, {q, kNeighborCount, f});
  auto nv = ops::gather_rows(values, idx, {q, kNeighborCount, f});
  auto weights = ops::softmax(ops::rowwise_dot(query, nk));
  return {ops::weighted_sum(weights, nv), weights};
}

template <typename T>
BasicTensor<T> decode(const CoordBatch& coords, const BasicTensor<T>& codes, const ModelParams<T>& params) {
  const auto q = static_cast<std::int64_t>(coords.size());
  if (codes.rank() != 2 || codes.dim(0) != q || codes.dim(1) != params.config.code_length) {
    throw ShapeError("decode: codes " + shape_to_string(codes.shape()) + " do not match " + std::to_string(q) +
                     " queries of length " + std::to_string(params.config.code_length));
  }
  std::vector<T> xyz(static_cast<std::size_t>(q * 3));
  for (std::int64_t i = 0; i < q; ++i) {
    for (int a = 0; a < 3; ++a) xyz[i * 3 + a] = static_cast<T>(coords[static_cast<std::size_t>(i)][a]);
  }
  const auto input = ops::concat_last(BasicTensor<T>::from_data({q, 3}, std::move(xyz)), codes);
  auto h = input;
  for (std::int64_t l = 0; l + 1 < kDecoderLayers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    h = ops::relu(ops::linear(h, params.fc_w[i], params.fc_b[i]));
    if (l + 1 == kDecoderResidualLayer) h = ops::add(h, ops::linear(input, params.residual_w, params.residual_b));
  }
  const auto last = static_cast<std::size_t>(kDecoderLayers - 1);
  return ops::reshape(ops::linear(h, params.fc_w[last], params.fc_b[last]), {q});
}

template <typename T>
BasicTensor<T> query(const LatentGrid<T>& grid, const CoordBatch& coords, const ModelParams<T>& params) {
  auto codes = params.config.use_lam ? alcgs(grid, coords, params).codes : trilinear_sample(grid, coords);
  return decode(coords, codes, params);
}

template <typename T>
BasicTensor<T> forward(const BasicTensor<T>& volume, const CoordBatch& coords, const ModelParams<T>& params) {
  return query(encode(volume, params), coords, params);
}

#define VOXELSR_INSTANTIATE_MODEL(T)                                                                        \
  template struct ModelParams<T>;                                                                           \
  template BasicTensor<T> volume_tensor<T>(const Volume&);                                                  \
  template LatentGrid<T> encode(const BasicTensor<T>&, const ModelParams<T>&);                              \
  template BasicTensor<T> trilinear_sample(const LatentGrid<T>&, const CoordBatch&);                        \
  template AttendedCodes<T> alcgs(const LatentGrid<T>&, const CoordBatch&, const ModelParams<T>&);          \
  template BasicTensor<T> decode(const CoordBatch&, const BasicTensor<T>&, const ModelParams<T>&);          \
  template BasicTensor<T> query(const LatentGrid<T>&, const CoordBatch&, const ModelParams<T>&);            \
  template BasicTensor<T> forward(const BasicTensor<T>&, const CoordBatch&, const ModelParams<T>&);

VOXELSR_INSTANTIATE_MODEL(float)
VOXELSR_INSTANTIATE_MODEL(double)

#undef VOXELSR_INSTANTIATE_MODEL

}  // namespace voxelsr
