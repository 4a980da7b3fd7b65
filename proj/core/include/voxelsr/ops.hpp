#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxelsr/tensor.hpp"

namespace voxelsr::ops {

/// Branch outcomes at the nonsmooth points of relu (input > 0) and l1_loss
/// (sign of the residual), in evaluation order, for forward passes on this
/// thread while the trace is alive. A replaying trace forces the recorded
/// outcomes instead of testing signs, which evaluates the smooth piece the
/// recording was taken on. Used for finite-difference checks near kinks.
class BranchTrace {
 public:
  BranchTrace();  // records
  explicit BranchTrace(std::vector<std::int8_t> replay);
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  const std::vector<std::int8_t>& sides() const { return sides_; }
  /// True when a replay consumed exactly the recorded outcomes.
  bool replay_complete() const { return replaying_ && cursor_ == sides_.size(); }

  static bool active();
  /// Outcome to use at the next branch point, given the computed one.
  static std::int8_t resolve(std::int8_t computed);

 private:
  std::vector<std::int8_t> sides_;
  std::size_t cursor_ = 0;
  bool replaying_ = false;
  BranchTrace* outer_;
};


// Elementwise and reductions.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& a);

/// Elementwise max(0, x). The subgradient at 0 is 0.
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& a);

/// Softmax along the last axis, max-subtracted.
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& a);

/// Mean absolute difference. `target` never receives a gradient.
template <typename T> BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

// Layout.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& a, const Shape& shape);
/// [M, N] -> [N, M].
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& a);
/// Concatenate along the trailing axis; leading dims must agree.
template <typename T> BasicTensor<T> concat_last(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// input[..., F_in] x weight[F_out, F_in]^T + bias[F_out].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// 3D cross-correlation (no kernel flip), stride 1.
/// input [N, C, D, H, W], kernel [K, C, kd, kh, kw], bias [K].
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::array<std::int64_t, 3> padding);

/// Rows of src[P, F] picked by `indices`; output shape is `out_shape` whose
/// trailing dim must equal F and whose leading dims multiply to indices.size().
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& src, const std::vector<std::int64_t>& indices,
                           const Shape& out_shape);

/// out[q, n] = dot(query[q, :], keys[q, n, :]).
template <typename T> BasicTensor<T> rowwise_dot(const BasicTensor<T>& query, const BasicTensor<T>& keys);

/// out[q, :] = sum_n weights[q, n] * values[q, n, :].
template <typename T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& weights, const BasicTensor<T>& values);

}  // namespace voxelsr::ops
