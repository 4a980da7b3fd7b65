#include "voxelsr/checkpoint.hpp"

#include <cstring>

#include "byte_io.hpp"
#include "voxelsr/error.hpp"

namespace voxelsr {
namespace {
constexpr char kModelMagic[4] = {'M', 'D', 'L', '1'};
}

std::vector<std::byte> encode_model(const ModelParams<float>& params) {
  const auto tensors = params.named();
  ByteWriter w;
  w.raw(kModelMagic, 4);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : tensors) {
    for (float f : t.data()) w.f32(f);
  }
  return w.take();
}

ModelParams<float> decode_model(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw FormatError("bad magic, expected MDL1", 0);
  }
  ByteReader r(bytes);
  r.skip(4);
  const auto count = r.u32();
  struct Entry {
    std::string name;
    Shape shape;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.u32();
    e.name = r.str(len);
    const auto rank = r.u32();
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), r.offset() - 4);
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.u32());
    manifest.push_back(std::move(e));
  }
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (auto& e : manifest) {
    const auto n = static_cast<std::size_t>(shape_numel(e.shape));
    if (r.remaining() < 4 * n) throw FormatError("truncated payload for tensor " + e.name, r.offset());
    std::vector<float> data(n);
    for (auto& f : data) f = r.f32();
    tensors.emplace_back(e.name, Tensor::from_data(e.shape, std::move(data), true));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after model payload", r.offset());
  try {
    return ModelParams<float>::from_named(tensors);
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent model manifest: ") + e.what(), 4);
  }
}

void save_model(const ModelParams<float>& params, const std::filesystem::path& path) {
  write_file(path, encode_model(params));
}

ModelParams<float> load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace voxelsr
