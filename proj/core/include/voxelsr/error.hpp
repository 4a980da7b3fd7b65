#pragma once

#include <stdexcept>
#include <string>

namespace voxelsr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or volume dimensions are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed VXR1/MDL1 file. `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or inference.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace voxelsr
