#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prenet/tensor.hpp"

namespace prenet {

enum class RecurrentCell { kNone, kLstm, kGru };
enum class ResBlockMode { kDistinct, kRecursive };
enum class InputMode { kConcatY, kXOnly };
enum class OutputMode { kResidual, kDirect };

std::string_view to_string(RecurrentCell v);
std::string_view to_string(ResBlockMode v);
std::string_view to_string(InputMode v);
std::string_view to_string(OutputMode v);
RecurrentCell parse_recurrent_cell(std::string_view s);
ResBlockMode parse_resblock_mode(std::string_view s);
InputMode parse_input_mode(std::string_view s);
OutputMode parse_output_mode(std::string_view s);

// One point of the ablation space. Defaults are the final PReNet model.
struct NetworkConfig {
  RecurrentCell recurrent_cell = RecurrentCell::kLstm;
  ResBlockMode resblock_mode = ResBlockMode::kDistinct;
  int stages = 6;
  InputMode input_mode = InputMode::kConcatY;
  OutputMode output_mode = OutputMode::kResidual;
  int channels = 32;
  int resblock_count = 5;

  // Raises ConfigError.
  void validate() const;
  int input_channels() const { return input_mode == InputMode::kConcatY ? 6 : 3; }
  // ResBlocks that own weights: one in recursive mode.
  int stored_resblocks() const { return resblock_mode == ResBlockMode::kRecursive ? 1 : resblock_count; }

  static NetworkConfig prn();
  static NetworkConfig prenet();
  static NetworkConfig prn_r();
  static NetworkConfig prenet_r();
  // "prn", "prenet", "prn-r", "prenet-r".
  static NetworkConfig from_arch(std::string_view arch);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Named convolution weights in canonical order.
///
/// Order: f_in.{w,b}; res[k].conv1.{w,b}, res[k].conv2.{w,b} per stored
/// block; recurrent gates (lstm: i,f,g,o; gru: z,r,n) as <cell>.<gate>.x.{w,b}
/// then <cell>.<gate>.h.w; f_out.{w,b}. Weights are (co, ci, 3, 3), biases
/// (1, co, 1, 1). The checkpoint blob is this order flattened.
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value);

  const Tensor<T>& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<NamedTensor<T>>& entries() const { return entries_; }
  std::vector<NamedTensor<T>>& entries() { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::int64_t total_count() const;
  void zero_grad();
  void set_requires_grad(bool value);

  // Concatenation of every tensor in canonical order.
  std::vector<T> flatten() const;
  // Overwrites values in canonical order; `values` must have total_count() entries.
  void assign(std::span<const T> values);

  // Fresh leaves with the values converted to U.
  template <typename U>
  ParameterSet<U> cast(bool requires_grad = true) const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(requires_grad));
    return out;
  }
  ParameterSet clone(bool requires_grad = true) const;

 private:
  std::vector<NamedTensor<T>> entries_;
};

// Closed form, no allocation. Independent of `stages`.
std::int64_t count_parameters(const NetworkConfig& config);
// Per part: f_in, f_res, recurrent (when present), f_out.
std::vector<std::pair<std::string, std::int64_t>> parameter_breakdown(const NetworkConfig& config);
// Canonical (name, shape) list that build() allocates.
std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkConfig& config);

/// Allocates the parameters for `config`. Weights are drawn uniformly from
/// [-b, b] with b = sqrt(1 / (ci * 9)); biases start at zero. The draw is a
/// pure function of `seed` and happens in double, so float and double builds
/// differ only by rounding.
template <typename T>
ParameterSet<T> build(const NetworkConfig& config, std::uint64_t seed);

template <typename T>
struct RecurrentState {
  Tensor<T> h;
  Tensor<T> c;  // unused by the GRU
};

template <typename T>
RecurrentState<T> zero_state(std::int64_t batch, int channels, std::int64_t height, std::int64_t width);

// i, f, o = sigmoid(Wx*x + b + Wh*h); g = tanh(...); c' = f.c + i.g; h' = o.tanh(c').
template <typename T>
RecurrentState<T> lstm_cell(const ParameterSet<T>& params, const RecurrentState<T>& state,
                            const Tensor<T>& x);

// z, r = sigmoid(Wx*x + b + Wh*h); n = tanh(Wx_n*x + b_n + Wh_n*(r.h));
// h' = (1 - z).n + z.h.
template <typename T>
RecurrentState<T> gru_cell(const ParameterSet<T>& params, const RecurrentState<T>& state,
                           const Tensor<T>& x);

template <typename T>
struct StageTrace {
  std::vector<Tensor<T>> estimates;
  // Head outputs r^t; filled only in residual mode.
  std::vector<Tensor<T>> residuals;

  const Tensor<T>& final_estimate() const { return estimates.back(); }
};

/// Runs the progressive recursion on a rainy batch `y` of shape (n, 3, h, w).
///
/// x^0 = y and the recurrent state starts at zero. Each stage applies the
/// same f_in, recurrent cell, f_res and f_out. With `stop_at_stage` the trace
/// holds only the first t estimates, which are bit-identical to the prefix of
/// a full run.
template <typename T>
StageTrace<T> forward(const ParameterSet<T>& params, const NetworkConfig& config,
                      const Tensor<T>& y, std::optional<int> stop_at_stage = std::nullopt);

}  // namespace prenet
