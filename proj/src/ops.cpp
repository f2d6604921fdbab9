#include "prenet/ops.hpp"

#include <Eigen/Core>

#include <cmath>

namespace prenet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

constexpr std::int64_t kKernel = 3;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

// col has shape (channels*9, h*w); row index (i*3 + dy)*3 + dx.
template <typename T>
void im2col(const T* in, std::int64_t channels, std::int64_t h, std::int64_t w, T* col) {
  const std::int64_t hw = h * w;
  for (std::int64_t i = 0; i < channels; ++i) {
    const T* plane = in + i * hw;
    for (std::int64_t dy = 0; dy < kKernel; ++dy) {
      for (std::int64_t dx = 0; dx < kKernel; ++dx) {
        T* row = col + ((i * kKernel + dy) * kKernel + dx) * hw;
        const std::int64_t ox = dx - 1;
        for (std::int64_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const std::int64_t sy = y + dy - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          const std::int64_t x0 = std::max<std::int64_t>(0, -ox);
          const std::int64_t x1 = std::min<std::int64_t>(w, w - ox);
          for (std::int64_t x = 0; x < x0; ++x) dst[x] = T(0);
          for (std::int64_t x = x0; x < x1; ++x) dst[x] = src[x + ox];
          for (std::int64_t x = std::max(x1, x0); x < w; ++x) dst[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::int64_t channels, std::int64_t h, std::int64_t w, T* out) {
  const std::int64_t hw = h * w;
  for (std::int64_t i = 0; i < channels; ++i) {
    T* plane = out + i * hw;
    for (std::int64_t dy = 0; dy < kKernel; ++dy) {
      for (std::int64_t dx = 0; dx < kKernel; ++dx) {
        const T* row = col + ((i * kKernel + dy) * kKernel + dx) * hw;
        const std::int64_t ox = dx - 1;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + dy - 1;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + y * w;
          T* dst = plane + sy * w;
          const std::int64_t x0 = std::max<std::int64_t>(0, -ox);
          const std::int64_t x1 = std::min<std::int64_t>(w, w - ox);
          for (std::int64_t x = x0; x < x1; ++x) dst[x + ox] += src[x];
        }
      }
    }
  }
}

template <typename T, typename Forward, typename Derivative>
Tensor<T> unary(const Tensor<T>& x, Forward f, Derivative df) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [df](const detail::Node<T>& self) {
    auto& gx = self.inputs[0]->grad_buffer();
    const auto& xin = self.inputs[0]->data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape is = input.shape();
  const Shape ws = weight.shape();
  if (ws.h != kKernel || ws.w != kKernel) {
    throw UnsupportedKernelError("conv2d supports 3x3 kernels only, got " + std::to_string(ws.h) +
                                 "x" + std::to_string(ws.w));
  }
  if (ws.c != is.c) {
    throw ShapeError("conv2d: input has " + std::to_string(is.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.numel()) + " != " +
                     std::to_string(ws.n));
  }
  const std::int64_t co = ws.n;
  const std::int64_t k = is.c * kKernel * kKernel;
  const std::int64_t hw = is.plane();
  const Shape os{is.n, co, is.h, is.w};

  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  std::vector<T> col(static_cast<std::size_t>(k * hw));
  ConstMatrixMap<T> wmat(weight.data().data(), co, k);
  for (std::int64_t n = 0; n < is.n; ++n) {
    im2col(input.data().data() + n * is.c * hw, is.c, is.h, is.w, col.data());
    MatrixMap<T> omat(out.data() + n * co * hw, co, hw);
    omat.noalias() = wmat * ConstMatrixMap<T>(col.data(), k, hw);
    if (has_bias) {
      const auto b = bias.data();
      for (std::int64_t o = 0; o < co; ++o) omat.row(o).array() += b[static_cast<std::size_t>(o)];
    }
  }

  std::vector<Tensor<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(os, std::move(out), std::move(inputs),
                        [is, co, k, hw, has_bias](const detail::Node<T>& self) {
    auto& in_node = *self.inputs[0];
    auto& w_node = *self.inputs[1];
    ConstMatrixMap<T> wmat(w_node.data.data(), co, k);
    std::vector<T> col(static_cast<std::size_t>(k * hw));
    std::vector<T> dcol;
    if (in_node.requires_grad) dcol.resize(col.size());
    for (std::int64_t n = 0; n < is.n; ++n) {
      ConstMatrixMap<T> g(self.grad.data() + n * co * hw, co, hw);
      if (w_node.requires_grad) {
        im2col(in_node.data.data() + n * is.c * hw, is.c, is.h, is.w, col.data());
        MatrixMap<T> dw(w_node.grad_buffer().data(), co, k);
        dw.noalias() += g * ConstMatrixMap<T>(col.data(), k, hw).transpose();
      }
      if (has_bias && self.inputs[2]->requires_grad) {
        auto& db = self.inputs[2]->grad_buffer();
        for (std::int64_t o = 0; o < co; ++o) {
          T acc = T(0);
          const T* row = self.grad.data() + (n * co + o) * hw;
          for (std::int64_t p = 0; p < hw; ++p) acc += row[p];
          db[static_cast<std::size_t>(o)] += acc;
        }
      }
      if (in_node.requires_grad) {
        MatrixMap<T> dc(dcol.data(), k, hw);
        dc.noalias() = wmat.transpose() * g;
        col2im_add(dcol.data(), is.c, is.h, is.w, in_node.grad_buffer().data() + n * is.c * hw);
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T out) { return out * (T(1) - out); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T out) { return T(1) - out * out; });
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(
      x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::int64_t na = sa.c * sa.plane();
  const std::int64_t nb = sb.c * sb.plane();
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < sa.n; ++n) {
    out.insert(out.end(), a.data().begin() + n * na, a.data().begin() + (n + 1) * na);
    out.insert(out.end(), b.data().begin() + n * nb, b.data().begin() + (n + 1) * nb);
  }
  return make_result<T>(os, std::move(out), {a, b}, [na, nb, batch = sa.n](const detail::Node<T>& self) {
    for (int side = 0; side < 2; ++side) {
      auto& node = *self.inputs[static_cast<std::size_t>(side)];
      if (!node.requires_grad) continue;
      auto& g = node.grad_buffer();
      const std::int64_t len = side == 0 ? na : nb;
      const std::int64_t offset = side == 0 ? 0 : na;
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* src = self.grad.data() + n * (na + nb) + offset;
        T* dst = g.data() + n * len;
        for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.c || begin >= end) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + s.str());
  }
  const Shape os{s.n, end - begin, s.h, s.w};
  const std::int64_t plane = s.plane();
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < s.n; ++n) {
    auto first = x.data().begin() + (n * s.c + begin) * plane;
    out.insert(out.end(), first, first + os.c * plane);
  }
  return make_result<T>(os, std::move(out), {x}, [s, os, begin](const detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const std::int64_t plane = s.plane();
    const std::int64_t len = os.c * plane;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* src = self.grad.data() + n * len;
      T* dst = g.data() + (n * s.c + begin) * plane;
      for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](const detail::Node<T>& self) {
    for (const auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](const detail::Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](const detail::Node<T>& self) {
    const auto& ad = self.inputs[0]->data;
    const auto& bd = self.inputs[1]->data;
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "div");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bd[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](const detail::Node<T>& self) {
    const auto& bd = self.inputs[1]->data;
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bd[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.data[i] / bd[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  return make_result<T>(kScalarShape, {static_cast<T>(acc)}, {x}, [](const detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T seed = self.grad[0];
    for (auto& v : g) v += seed;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  const double count = static_cast<double>(x.numel());
  return make_result<T>(kScalarShape, {static_cast<T>(acc / count)}, {x},
                        [count](const detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const T seed = static_cast<T>(static_cast<double>(self.grad[0]) / count);
    for (auto& v : g) v += seed;
  });
}

namespace {

template <typename T>
void filter_rows(const T* in, T* out, std::int64_t h, std::int64_t w, std::span<const T> taps) {
  const std::int64_t r = static_cast<std::int64_t>(taps.size()) / 2;
  for (std::int64_t y = 0; y < h; ++y) {
    const T* src = in + y * w;
    T* dst = out + y * w;
    for (std::int64_t x = 0; x < w; ++x) {
      T acc = T(0);
      const std::int64_t k0 = std::max<std::int64_t>(0, r - x);
      const std::int64_t k1 = std::min<std::int64_t>(2 * r + 1, w - x + r);
      for (std::int64_t k = k0; k < k1; ++k) acc += taps[static_cast<std::size_t>(k)] * src[x + k - r];
      dst[x] = acc;
    }
  }
}

template <typename T>
void filter_cols(const T* in, T* out, std::int64_t h, std::int64_t w, std::span<const T> taps) {
  const std::int64_t r = static_cast<std::int64_t>(taps.size()) / 2;
  for (std::int64_t y = 0; y < h; ++y) {
    T* dst = out + y * w;
    std::fill(dst, dst + w, T(0));
    const std::int64_t k0 = std::max<std::int64_t>(0, r - y);
    const std::int64_t k1 = std::min<std::int64_t>(2 * r + 1, h - y + r);
    for (std::int64_t k = k0; k < k1; ++k) {
      const T t = taps[static_cast<std::size_t>(k)];
      const T* src = in + (y + k - r) * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] += t * src[x];
    }
  }
}

// Adjoints of the two passes above: scatter instead of gather.
template <typename T>
void filter_rows_adjoint(const T* g, T* out, std::int64_t h, std::int64_t w, std::span<const T> taps) {
  const std::int64_t r = static_cast<std::int64_t>(taps.size()) / 2;
  for (std::int64_t y = 0; y < h; ++y) {
    const T* src = g + y * w;
    T* dst = out + y * w;
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t k0 = std::max<std::int64_t>(0, r - x);
      const std::int64_t k1 = std::min<std::int64_t>(2 * r + 1, w - x + r);
      for (std::int64_t k = k0; k < k1; ++k) dst[x + k - r] += taps[static_cast<std::size_t>(k)] * src[x];
    }
  }
}

template <typename T>
void filter_cols_adjoint(const T* g, T* out, std::int64_t h, std::int64_t w, std::span<const T> taps) {
  const std::int64_t r = static_cast<std::int64_t>(taps.size()) / 2;
  std::fill(out, out + h * w, T(0));
  for (std::int64_t y = 0; y < h; ++y) {
    const T* src = g + y * w;
    const std::int64_t k0 = std::max<std::int64_t>(0, r - y);
    const std::int64_t k1 = std::min<std::int64_t>(2 * r + 1, h - y + r);
    for (std::int64_t k = k0; k < k1; ++k) {
      const T t = taps[static_cast<std::size_t>(k)];
      T* dst = out + (y + k - r) * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] += t * src[x];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> separable_filter(const Tensor<T>& x, std::span<const double> taps) {
  if (taps.empty() || taps.size() % 2 == 0) {
    throw ContractError("separable_filter needs an odd, non-empty tap list");
  }
  std::vector<T> k(taps.begin(), taps.end());
  const Shape s = x.shape();
  const std::int64_t planes = s.n * s.c;
  const std::int64_t hw = s.plane();
  std::vector<T> out(static_cast<std::size_t>(s.numel()));
  std::vector<T> tmp(static_cast<std::size_t>(hw));
  for (std::int64_t p = 0; p < planes; ++p) {
    filter_rows<T>(x.data().data() + p * hw, tmp.data(), s.h, s.w, k);
    filter_cols<T>(tmp.data(), out.data() + p * hw, s.h, s.w, k);
  }
  return make_result<T>(s, std::move(out), {x}, [s, planes, hw, k](const detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    std::vector<T> tmp(static_cast<std::size_t>(hw));
    for (std::int64_t p = 0; p < planes; ++p) {
      filter_cols_adjoint<T>(self.grad.data() + p * hw, tmp.data(), s.h, s.w, k);
      filter_rows_adjoint<T>(tmp.data(), g.data() + p * hw, s.h, s.w, k);
    }
  });
}

#define PRENET_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> relu(const Tensor<T>&);                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                       \
  template Tensor<T> tanh(const Tensor<T>&);                                          \
  template Tensor<T> one_minus(const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                 \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sum(const Tensor<T>&);                                           \
  template Tensor<T> mean(const Tensor<T>&);                                          \
  template Tensor<T> separable_filter(const Tensor<T>&, std::span<const double>);

PRENET_INSTANTIATE_OPS(float)
PRENET_INSTANTIATE_OPS(double)

#undef PRENET_INSTANTIATE_OPS

}  // namespace prenet
