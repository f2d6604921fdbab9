#pragma once

// Test-only helpers: random tensors, a naive convolution, and the central
// finite-difference gradient oracle. Nothing here calls into the backward
// rules under test.

#include <algorithm>
#include <cstring>
#include <unistd.h>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <string>
#include <vector>

#include "prenet/network.hpp"
#include "prenet/ops.hpp"
#include "prenet/random.hpp"
#include "prenet/tensor.hpp"

namespace prenet::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  Rng rng(seed);
  std::vector<T> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from_vector(shape, std::move(v), requires_grad);
}

// Direct summation over the zero-padded 3x3 window.
template <typename T>
std::vector<T> naive_conv(const Tensor<T>& in, const Tensor<T>& w, const std::vector<T>& bias) {
  const Shape s = in.shape();
  const Shape ws = w.shape();
  std::vector<T> out(static_cast<std::size_t>(s.n * ws.n * s.h * s.w));
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t o = 0; o < ws.n; ++o)
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
          T acc = bias.empty() ? T(0) : bias[static_cast<std::size_t>(o)];
          for (std::int64_t i = 0; i < s.c; ++i)
            for (std::int64_t dy = 0; dy < 3; ++dy)
              for (std::int64_t dx = 0; dx < 3; ++dx) {
                const std::int64_t yy = y + dy - 1;
                const std::int64_t xx = x + dx - 1;
                if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                acc += w.at(o, i, dy, dx) * in.at(n, i, yy, xx);
              }
          out[static_cast<std::size_t>(((n * ws.n + o) * s.h + y) * s.w + x)] = acc;
        }
  return out;
}

struct GradCheck {
  double max_error = 0.0;  // |analytic - numeric| / max(1, |analytic|)
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every element of
/// every input. `f` maps the inputs to a single-element tensor.
inline GradCheck check_gradients(std::vector<Tensor<double>> inputs,
                                 const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                 double step = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(f(inputs));
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad());

  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = f(inputs).item();
      values[i] = saved - step;
      const double minus = f(inputs).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[k][i];
      result.max_error = std::max(result.max_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++result.checked;
    }
  }
  return result;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("prenet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                                              [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

// One PRN stage (no recurrent cell) written out op by op, independent of
// forward(). Used as the unrolled two-copy oracle for weight sharing.
template <typename T>
Tensor<T> prn_stage_oracle(const ParameterSet<T>& p, const NetworkConfig& cfg, const Tensor<T>& x,
                           const Tensor<T>& y) {
  const Tensor<T> in = cfg.input_mode == InputMode::kConcatY ? concat_channels(x, y) : x;
  Tensor<T> feat = relu(conv2d(in, p["f_in.w"], p["f_in.b"]));
  for (int k = 0; k < cfg.resblock_count; ++k) {
    const int b = cfg.resblock_mode == ResBlockMode::kRecursive ? 0 : k;
    const std::string pre = "res[" + std::to_string(b) + "].";
    Tensor<T> r = relu(conv2d(feat, p[pre + "conv1.w"], p[pre + "conv1.b"]));
    r = relu(conv2d(r, p[pre + "conv2.w"], p[pre + "conv2.b"]));
    feat = relu(add(r, feat));
  }
  Tensor<T> head = conv2d(feat, p["f_out.w"], p["f_out.b"]);
  return cfg.output_mode == OutputMode::kResidual ? add(y, head) : head;
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace prenet::testing
