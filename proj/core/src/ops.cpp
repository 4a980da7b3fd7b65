#include "voxelsr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "voxelsr/error.hpp"

namespace voxelsr::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
using BackwardFn = std::function<void(detail::Node<T>&)>;

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::initializer_list<const BasicTensor<T>*> inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto* in : inputs) needs_grad = needs_grad || in->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node());
    node->backward_fn = std::move(fn);
  }
  return BasicTensor<T>(std::move(node));
}

// Parent grad buffer, or nullptr when that parent does not take gradients.
template <typename T>
T* parent_grad(detail::Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad() : nullptr;
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                      " vs " + shape_to_string(b.shape()));
}

thread_local BranchTrace* current_trace = nullptr;

}  // namespace

BranchTrace::BranchTrace() : outer_(current_trace) { current_trace = this; }

BranchTrace::BranchTrace(std::vector<std::int8_t> replay)
    : sides_(std::move(replay)), replaying_(true), outer_(current_trace) {
  current_trace = this;
}

BranchTrace::~BranchTrace() { current_trace = outer_; }

bool BranchTrace::active() { return current_trace != nullptr; }

std::int8_t BranchTrace::resolve(std::int8_t computed) {
  auto* t = current_trace;
  if (t == nullptr) return computed;
  if (!t->replaying_) {
    t->sides_.push_back(computed);
    return computed;
  }
  if (t->cursor_ >= t->sides_.size()) throw Error("BranchTrace: replay ran past the recording");
  return t->sides_[t->cursor_++];
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, [factor](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return make_result<T>({}, {acc}, {&a}, [](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    const T up = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += up;
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  require(a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  if (BranchTrace::active()) {
    for (auto& v : out) v = BranchTrace::resolve(v > T(0)) ? v : T(0);
  } else {
    for (auto& v : out) v = v > T(0) ? v : T(0);
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    const auto& x = self.parents[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& a) {
  require(a.rank() >= 1 && a.shape().back() > 0, "softmax: needs a nonempty trailing axis");
  const auto n = static_cast<std::size_t>(a.shape().back());
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t row = 0; row < out.size(); row += n) {
    T* r = out.data() + row;
    const T mx = *std::max_element(r, r + n);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = std::exp(r[i] - mx);
      total += r[i];
    }
    for (std::size_t i = 0; i < n; ++i) r[i] /= total;
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [n](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    const auto& y = self.data;
    for (std::size_t row = 0; row < y.size(); row += n) {
      T dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += self.grad[row + i] * y[row + i];
      for (std::size_t i = 0; i < n; ++i) g[row + i] += y[row + i] * (self.grad[row + i] - dot);
    }
  });
}

template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "l1_loss");
  require(pred.numel() > 0, "l1_loss of empty tensors");
  const auto p = pred.data();
  const auto t = target.data();
  T acc = 0;
  if (BranchTrace::active()) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T d = p[i] - t[i];
      acc += static_cast<T>(BranchTrace::resolve(static_cast<std::int8_t>((d > T(0)) - (d < T(0))))) * d;
    }
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
  }
  const T inv_n = T(1) / static_cast<T>(p.size());
  // The target is deliberately not registered as a parent.
  auto target_values = std::make_shared<std::vector<T>>(t.begin(), t.end());
  return make_result<T>({}, {acc * inv_n}, {&pred}, [target_values, inv_n](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    const auto& x = self.parents[0]->data;
    const T up = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T d = x[i] - (*target_values)[i];
      if (d > T(0)) g[i] += up;
      else if (d < T(0)) g[i] -= up;
    }
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, const Shape& shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(shape, std::move(out), {&a}, [](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require(a.rank() == 2, "transpose: expected rank 2, got " + shape_to_string(a.shape()));
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<T> out(a.data().size());
  MapMat<T>(out.data(), cols, rows) = ConstMapMat<T>(a.data().data(), rows, cols).transpose();
  return make_result<T>({cols, rows}, std::move(out), {&a}, [rows, cols](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    MapMat<T>(g, rows, cols) += ConstMapMat<T>(self.grad.data(), cols, rows).transpose();
  });
}

template <typename T>
BasicTensor<T> concat_last(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.rank() >= 1 && a.rank() == b.rank(), "concat_last: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    require(a.dim(i) == b.dim(i), "concat_last: leading dims differ " + shape_to_string(a.shape()) +
                                      " vs " + shape_to_string(b.shape()));
  }
  const auto fa = static_cast<std::size_t>(a.shape().back());
  const auto fb = static_cast<std::size_t>(b.shape().back());
  const std::size_t rows = fa + fb == 0 ? 0 : (a.data().size() + b.data().size()) / (fa + fb);
  Shape shape = a.shape();
  shape.back() = static_cast<std::int64_t>(fa + fb);
  std::vector<T> out(rows * (fa + fb));
  const auto ad = a.data(), bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ad.data() + r * fa, fa, out.data() + r * (fa + fb));
    std::copy_n(bd.data() + r * fb, fb, out.data() + r * (fa + fb) + fa);
  }
  return make_result<T>(std::move(shape), std::move(out), {&a, &b}, [rows, fa, fb](detail::Node<T>& self) {
    T* ga = parent_grad(self, 0);
    T* gb = parent_grad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = self.grad.data() + r * (fa + fb);
      if (ga) {
        for (std::size_t i = 0; i < fa; ++i) ga[r * fa + i] += src[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < fb; ++i) gb[r * fb + i] += src[fa + i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require(weight.rank() == 2, "linear: weight must be rank 2");
  const auto fout = weight.dim(0), fin = weight.dim(1);
  require(input.rank() >= 1 && input.shape().back() == fin,
          "linear: input " + shape_to_string(input.shape()) + " incompatible with weight " +
              shape_to_string(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == fout, "linear: bias must be [F_out]");
  const auto rows = fin == 0 ? 0 : input.numel() / fin;
  Shape shape = input.shape();
  shape.back() = fout;
  // Each output is bias + sum_k x[k] w[k] accumulated in k order, so a row's
  // result never depends on the other rows in the batch or on buffer alignment.
  std::vector<T> wt(static_cast<std::size_t>(fin * fout));
  MapMat<T>(wt.data(), fin, fout) = ConstMapMat<T>(weight.data().data(), fout, fin).transpose();
  std::vector<T> out(static_cast<std::size_t>(rows * fout));
  const T* xd = input.data().data();
  const T* bd = bias.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    T* y = out.data() + r * fout;
    const T* x = xd + r * fin;
    std::copy_n(bd, fout, y);
    for (std::int64_t k = 0; k < fin; ++k) {
      const T xk = x[k];
      const T* wk = wt.data() + k * fout;
      for (std::int64_t o = 0; o < fout; ++o) y[o] += xk * wk[o];
    }
  }
  return make_result<T>(std::move(shape), std::move(out), {&input, &weight, &bias},
                        [rows, fin, fout](detail::Node<T>& self) {
                          ConstMapMat<T> dy(self.grad.data(), rows, fout);
                          const auto& xn = *self.parents[0];
                          const auto& wn = *self.parents[1];
                          if (T* gx = parent_grad(self, 0)) {
                            MapMat<T>(gx, rows, fin).noalias() += dy * ConstMapMat<T>(wn.data.data(), fout, fin);
                          }
                          if (T* gw = parent_grad(self, 1)) {
                            MapMat<T>(gw, fout, fin).noalias() +=
                                dy.transpose() * ConstMapMat<T>(xn.data.data(), rows, fin);
                          }
                          if (T* gb = parent_grad(self, 2)) {
                            for (std::int64_t r = 0; r < rows; ++r) {
                              const T* d = self.grad.data() + r * fout;
                              for (std::int64_t o = 0; o < fout; ++o) gb[o] += d[o];
                            }
                          }
                        });
}

namespace {

struct ConvGeometry {
  std::int64_t channels, depth, height, width;
  std::int64_t kd, kh, kw;
  std::int64_t pd, ph, pw;
  std::int64_t od, oh, ow;

  std::int64_t col_rows() const { return channels * kd * kh * kw; }
  std::int64_t col_cols() const { return od * oh * ow; }
};

template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const auto plane = g.col_cols();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* chan = in + c * g.depth * g.height * g.width;
    for (std::int64_t a = 0; a < g.kd; ++a) {
      for (std::int64_t b = 0; b < g.kh; ++b) {
        for (std::int64_t e = 0; e < g.kw; ++e, ++row) {
          T* dst = cols + row * plane;
          const std::int64_t x_lo = std::max<std::int64_t>(0, g.pw - e);
          const std::int64_t x_hi = std::min<std::int64_t>(g.ow, g.width + g.pw - e);
          for (std::int64_t z = 0; z < g.od; ++z) {
            const std::int64_t iz = z + a - g.pd;
            for (std::int64_t y = 0; y < g.oh; ++y) {
              T* d = dst + (z * g.oh + y) * g.ow;
              const std::int64_t iy = y + b - g.ph;
              if (iz < 0 || iz >= g.depth || iy < 0 || iy >= g.height || x_lo >= x_hi) {
                std::fill_n(d, g.ow, T(0));
                continue;
              }
              const T* s = chan + (iz * g.height + iy) * g.width + (e - g.pw);
              std::fill(d, d + x_lo, T(0));
              std::copy(s + x_lo, s + x_hi, d + x_lo);
              std::fill(d + x_hi, d + g.ow, T(0));
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* in_grad) {
  const auto plane = g.col_cols();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* chan = in_grad + c * g.depth * g.height * g.width;
    for (std::int64_t a = 0; a < g.kd; ++a) {
      for (std::int64_t b = 0; b < g.kh; ++b) {
        for (std::int64_t e = 0; e < g.kw; ++e, ++row) {
          const T* src = cols + row * plane;
          const std::int64_t x_lo = std::max<std::int64_t>(0, g.pw - e);
          const std::int64_t x_hi = std::min<std::int64_t>(g.ow, g.width + g.pw - e);
          for (std::int64_t z = 0; z < g.od; ++z) {
            const std::int64_t iz = z + a - g.pd;
            if (iz < 0 || iz >= g.depth) continue;
            for (std::int64_t y = 0; y < g.oh; ++y) {
              const std::int64_t iy = y + b - g.ph;
              if (iy < 0 || iy >= g.height) continue;
              const T* s = src + (z * g.oh + y) * g.ow;
              T* d = chan + (iz * g.height + iy) * g.width + (e - g.pw);
              for (std::int64_t x = x_lo; x < x_hi; ++x) d[x] += s[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::array<std::int64_t, 3> padding) {
  require(input.rank() == 5, "conv3d: input must be [N,C,D,H,W], got " + shape_to_string(input.shape()));
  require(kernel.rank() == 5, "conv3d: kernel must be [K,C,kd,kh,kw], got " + shape_to_string(kernel.shape()));
  require(input.dim(1) == kernel.dim(1), "conv3d: channel mismatch, input has " + std::to_string(input.dim(1)) +
                                             " but kernel expects " + std::to_string(kernel.dim(1)));
  require(bias.rank() == 1 && bias.dim(0) == kernel.dim(0), "conv3d: bias must be [K]");
  for (int i = 0; i < 3; ++i) require(padding[i] >= 0, "conv3d: negative padding");

  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), input.dim(4), kernel.dim(2), kernel.dim(3),
                 kernel.dim(4), padding[0], padding[1], padding[2], 0, 0, 0};
  g.od = g.depth + 2 * g.pd - g.kd + 1;
  g.oh = g.height + 2 * g.ph - g.kh + 1;
  g.ow = g.width + 2 * g.pw - g.kw + 1;
  require(g.od > 0 && g.oh > 0 && g.ow > 0, "conv3d: kernel larger than padded input");

  const auto batch = input.dim(0);
  const auto out_ch = kernel.dim(0);
  const auto in_stride = g.channels * g.depth * g.height * g.width;
  const auto out_plane = g.col_cols();
  std::vector<T> out(static_cast<std::size_t>(batch * out_ch * out_plane));
  std::vector<T> cols(static_cast<std::size_t>(g.col_rows() * out_plane));
  ConstMapMat<T> w(kernel.data().data(), out_ch, g.col_rows());
  const auto b = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data().data(), out_ch);
  for (std::int64_t n = 0; n < batch; ++n) {
    im2col(input.data().data() + n * in_stride, g, cols.data());
    MapMat<T> y(out.data() + n * out_ch * out_plane, out_ch, out_plane);
    y.noalias() = w * ConstMapMat<T>(cols.data(), g.col_rows(), out_plane);
    y.colwise() += b;
  }

  return make_result<T>(
      {batch, out_ch, g.od, g.oh, g.ow}, std::move(out), {&input, &kernel, &bias},
      [g, batch, out_ch, in_stride, out_plane](detail::Node<T>& self) {
        const auto& xn = *self.parents[0];
        const auto& kn = *self.parents[1];
        T* gx = parent_grad(self, 0);
        T* gk = parent_grad(self, 1);
        T* gb = parent_grad(self, 2);
        std::vector<T> cols(static_cast<std::size_t>(g.col_rows() * out_plane));
        ConstMapMat<T> w(kn.data.data(), out_ch, g.col_rows());
        for (std::int64_t n = 0; n < batch; ++n) {
          ConstMapMat<T> dy(self.grad.data() + n * out_ch * out_plane, out_ch, out_plane);
          if (gb) {
            for (std::int64_t k = 0; k < out_ch; ++k) {
              const T* d = self.grad.data() + (n * out_ch + k) * out_plane;
              T acc = 0;
              for (std::int64_t i = 0; i < out_plane; ++i) acc += d[i];
              gb[k] += acc;
            }
          }
          if (gk) {
            im2col(xn.data.data() + n * in_stride, g, cols.data());
            MapMat<T>(gk, out_ch, g.col_rows()).noalias() +=
                dy * ConstMapMat<T>(cols.data(), g.col_rows(), out_plane).transpose();
          }
          if (gx) {
            MapMat<T>(cols.data(), g.col_rows(), out_plane).noalias() = w.transpose() * dy;
            col2im_add(cols.data(), g, gx + n * in_stride);
          }
        }
      });
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& src, const std::vector<std::int64_t>& indices,
                           const Shape& out_shape) {
  require(src.rank() == 2, "gather_rows: source must be [P, F]");
  const auto rows = src.dim(0), feat = src.dim(1);
  require(!out_shape.empty() && out_shape.back() == feat &&
              shape_numel(out_shape) == static_cast<std::int64_t>(indices.size()) * feat,
          "gather_rows: output shape " + shape_to_string(out_shape) + " inconsistent with indices");
  std::vector<T> out(indices.size() * static_cast<std::size_t>(feat));
  const T* s = src.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto r = indices[i];
    require(r >= 0 && r < rows, "gather_rows: index out of range");
    std::copy_n(s + r * feat, feat, out.data() + i * feat);
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
  return make_result<T>(out_shape, std::move(out), {&src}, [idx, feat](detail::Node<T>& self) {
    T* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      T* d = g + (*idx)[i] * feat;
      const T* s = self.grad.data() + i * feat;
      for (std::int64_t f = 0; f < feat; ++f) d[f] += s[f];
    }
  });
}

template <typename T>
BasicTensor<T> rowwise_dot(const BasicTensor<T>& query, const BasicTensor<T>& keys) {
  require(query.rank() == 2 && keys.rank() == 3 && keys.dim(0) == query.dim(0) && keys.dim(2) == query.dim(1),
          "rowwise_dot: expected query [Q,F] and keys [Q,N,F], got " + shape_to_string(query.shape()) + " and " +
              shape_to_string(keys.shape()));
  const auto q_count = query.dim(0), n = keys.dim(1), f = query.dim(1);
  std::vector<T> out(static_cast<std::size_t>(q_count * n));
  const T* qd = query.data().data();
  const T* kd = keys.data().data();
  for (std::int64_t q = 0; q < q_count; ++q) {
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = 0;
      const T* k = kd + (q * n + j) * f;
      for (std::int64_t i = 0; i < f; ++i) acc += qd[q * f + i] * k[i];
      out[q * n + j] = acc;
    }
  }
  return make_result<T>({q_count, n}, std::move(out), {&query, &keys}, [q_count, n, f](detail::Node<T>& self) {
    const T* qd = self.parents[0]->data.data();
    const T* kd = self.parents[1]->data.data();
    T* gq = parent_grad(self, 0);
    T* gk = parent_grad(self, 1);
    for (std::int64_t q = 0; q < q_count; ++q) {
      for (std::int64_t j = 0; j < n; ++j) {
        const T up = self.grad[q * n + j];
        const auto base = (q * n + j) * f;
        if (gq) {
          for (std::int64_t i = 0; i < f; ++i) gq[q * f + i] += up * kd[base + i];
        }
        if (gk) {
          for (std::int64_t i = 0; i < f; ++i) gk[base + i] += up * qd[q * f + i];
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& weights, const BasicTensor<T>& values) {
  require(weights.rank() == 2 && values.rank() == 3 && values.dim(0) == weights.dim(0) &&
              values.dim(1) == weights.dim(1),
          "weighted_sum: expected weights [Q,N] and values [Q,N,F], got " + shape_to_string(weights.shape()) +
              " and " + shape_to_string(values.shape()));
  const auto q_count = values.dim(0), n = values.dim(1), f = values.dim(2);
  std::vector<T> out(static_cast<std::size_t>(q_count * f), T(0));
  const T* wd = weights.data().data();
  const T* vd = values.data().data();
  for (std::int64_t q = 0; q < q_count; ++q) {
    T* o = out.data() + q * f;
    for (std::int64_t j = 0; j < n; ++j) {
      const T w = wd[q * n + j];
      const T* v = vd + (q * n + j) * f;
      for (std::int64_t i = 0; i < f; ++i) o[i] += w * v[i];
    }
  }
  return make_result<T>({q_count, f}, std::move(out), {&weights, &values}, [q_count, n, f](detail::Node<T>& self) {
    const T* wd = self.parents[0]->data.data();
    const T* vd = self.parents[1]->data.data();
    T* gw = parent_grad(self, 0);
    T* gv = parent_grad(self, 1);
    for (std::int64_t q = 0; q < q_count; ++q) {
      const T* up = self.grad.data() + q * f;
      for (std::int64_t j = 0; j < n; ++j) {
        const auto base = (q * n + j) * f;
        if (gw) {
          T acc = 0;
          for (std::int64_t i = 0; i < f; ++i) acc += up[i] * vd[base + i];
          gw[q * n + j] += acc;
        }
        if (gv) {
          const T w = wd[q * n + j];
          for (std::int64_t i = 0; i < f; ++i) gv[base + i] += w * up[i];
        }
      }
    }
  });
}

#define VOXELSR_INSTANTIATE_OPS(T)                                                                          \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                  \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> l1_loss(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> reshape(const BasicTensor<T>&, const Shape&);                                     \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> concat_last(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                 std::array<std::int64_t, 3>);                                              \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, const std::vector<std::int64_t>&, const Shape&); \
  template BasicTensor<T> rowwise_dot(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> weighted_sum(const BasicTensor<T>&, const BasicTensor<T>&);

VOXELSR_INSTANTIATE_OPS(float)
VOXELSR_INSTANTIATE_OPS(double)

#undef VOXELSR_INSTANTIATE_OPS

}  // namespace voxelsr::ops
