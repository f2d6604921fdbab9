#include "prenet/network.hpp"

#include <cmath>

#include "prenet/ops.hpp"
#include "prenet/random.hpp"

namespace prenet {

namespace {

constexpr std::int64_t kTaps = 9;
constexpr std::int64_t kImageChannels = 3;

constexpr std::string_view kLstmGates[] = {"i", "f", "g", "o"};
constexpr std::string_view kGruGates[] = {"z", "r", "n"};

std::string_view cell_prefix(RecurrentCell cell) { return cell == RecurrentCell::kGru ? "gru" : "lstm"; }

std::size_t gate_count(RecurrentCell cell) {
  switch (cell) {
    case RecurrentCell::kNone:
      return 0;
    case RecurrentCell::kLstm:
      return std::size(kLstmGates);
    case RecurrentCell::kGru:
      return std::size(kGruGates);
  }
  return 0;
}

std::string_view gate_name(RecurrentCell cell, std::size_t g) {
  return cell == RecurrentCell::kGru ? kGruGates[g] : kLstmGates[g];
}

std::string res_name(int block, int conv, char part) {
  return "res[" + std::to_string(block) + "].conv" + std::to_string(conv) + "." + part;
}

std::string gate_param(RecurrentCell cell, std::string_view gate, std::string_view source, char part) {
  std::string s(cell_prefix(cell));
  s += '.';
  s += gate;
  s += '.';
  s += source;
  s += '.';
  s += part;
  return s;
}

Shape weight_shape(std::int64_t co, std::int64_t ci) { return {co, ci, 3, 3}; }
Shape bias_shape(std::int64_t co) { return {1, co, 1, 1}; }

}  // namespace

std::string_view to_string(RecurrentCell v) {
  switch (v) {
    case RecurrentCell::kNone:
      return "none";
    case RecurrentCell::kLstm:
      return "lstm";
    case RecurrentCell::kGru:
      return "gru";
  }
  return "?";
}

std::string_view to_string(ResBlockMode v) {
  return v == ResBlockMode::kRecursive ? "recursive" : "distinct";
}

std::string_view to_string(InputMode v) { return v == InputMode::kXOnly ? "x_only" : "concat_y"; }

std::string_view to_string(OutputMode v) { return v == OutputMode::kDirect ? "direct" : "residual"; }

RecurrentCell parse_recurrent_cell(std::string_view s) {
  if (s == "none") return RecurrentCell::kNone;
  if (s == "lstm") return RecurrentCell::kLstm;
  if (s == "gru") return RecurrentCell::kGru;
  throw ConfigError("unknown recurrent cell '" + std::string(s) + "'");
}

ResBlockMode parse_resblock_mode(std::string_view s) {
  if (s == "distinct") return ResBlockMode::kDistinct;
  if (s == "recursive") return ResBlockMode::kRecursive;
  throw ConfigError("unknown resblock mode '" + std::string(s) + "'");
}

InputMode parse_input_mode(std::string_view s) {
  if (s == "concat_y") return InputMode::kConcatY;
  if (s == "x_only") return InputMode::kXOnly;
  throw ConfigError("unknown input mode '" + std::string(s) + "'");
}

OutputMode parse_output_mode(std::string_view s) {
  if (s == "residual") return OutputMode::kResidual;
  if (s == "direct") return OutputMode::kDirect;
  throw ConfigError("unknown output mode '" + std::string(s) + "'");
}

void NetworkConfig::validate() const {
  if (channels <= 0) throw ConfigError("channels must be positive, got " + std::to_string(channels));
  if (stages <= 0) throw ConfigError("stages must be positive, got " + std::to_string(stages));
  if (resblock_count <= 0) {
    throw ConfigError("resblock_count must be positive, got " + std::to_string(resblock_count));
  }
}

NetworkConfig NetworkConfig::prn() {
  NetworkConfig c;
  c.recurrent_cell = RecurrentCell::kNone;
  return c;
}

NetworkConfig NetworkConfig::prenet() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::prn_r() {
  NetworkConfig c = prn();
  c.resblock_mode = ResBlockMode::kRecursive;
  return c;
}

NetworkConfig NetworkConfig::prenet_r() {
  NetworkConfig c = prenet();
  c.resblock_mode = ResBlockMode::kRecursive;
  return c;
}

NetworkConfig NetworkConfig::from_arch(std::string_view arch) {
  if (arch == "prn") return prn();
  if (arch == "prenet") return prenet();
  if (arch == "prn-r") return prn_r();
  if (arch == "prenet-r") return prenet_r();
  throw ConfigError("unknown arch '" + std::string(arch) + "' (expected prn, prenet, prn-r, prenet-r)");
}

template <typename T>
void ParameterSet<T>::add(std::string name, Tensor<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

template <typename T>
const Tensor<T>& ParameterSet<T>::operator[](std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
bool ParameterSet<T>::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

template <typename T>
std::int64_t ParameterSet<T>::total_count() const {
  std::int64_t total = 0;
  for (const auto& e : entries_) total += e.value.numel();
  return total;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template <typename T>
void ParameterSet<T>::set_requires_grad(bool value) {
  for (auto& e : entries_) e.value.set_requires_grad(value);
}

template <typename T>
std::vector<T> ParameterSet<T>::flatten() const {
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(total_count()));
  for (const auto& e : entries_) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
  return out;
}

template <typename T>
void ParameterSet<T>::assign(std::span<const T> values) {
  if (static_cast<std::int64_t>(values.size()) != total_count()) {
    throw ContractError("assign: " + std::to_string(values.size()) + " values for " +
                        std::to_string(total_count()) + " parameters");
  }
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto dst = e.value.mutable_data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

template <typename T>
ParameterSet<T> ParameterSet<T>::clone(bool requires_grad) const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, e.value.clone(requires_grad));
  return out;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkConfig& config) {
  config.validate();
  const std::int64_t c = config.channels;
  std::vector<std::pair<std::string, Shape>> layout;
  layout.emplace_back("f_in.w", weight_shape(c, config.input_channels()));
  layout.emplace_back("f_in.b", bias_shape(c));
  for (int k = 0; k < config.stored_resblocks(); ++k) {
    for (int conv = 1; conv <= 2; ++conv) {
      layout.emplace_back(res_name(k, conv, 'w'), weight_shape(c, c));
      layout.emplace_back(res_name(k, conv, 'b'), bias_shape(c));
    }
  }
  for (std::size_t g = 0; g < gate_count(config.recurrent_cell); ++g) {
    const auto gate = gate_name(config.recurrent_cell, g);
    layout.emplace_back(gate_param(config.recurrent_cell, gate, "x", 'w'), weight_shape(c, c));
    layout.emplace_back(gate_param(config.recurrent_cell, gate, "x", 'b'), bias_shape(c));
    layout.emplace_back(gate_param(config.recurrent_cell, gate, "h", 'w'), weight_shape(c, c));
  }
  layout.emplace_back("f_out.w", weight_shape(kImageChannels, c));
  layout.emplace_back("f_out.b", bias_shape(kImageChannels));
  return layout;
}

std::vector<std::pair<std::string, std::int64_t>> parameter_breakdown(const NetworkConfig& config) {
  config.validate();
  const std::int64_t c = config.channels;
  const std::int64_t conv_cc = c * c * kTaps + c;
  std::vector<std::pair<std::string, std::int64_t>> parts;
  parts.emplace_back("f_in", config.input_channels() * c * kTaps + c);
  parts.emplace_back("f_res", config.stored_resblocks() * 2 * conv_cc);
  if (config.recurrent_cell != RecurrentCell::kNone) {
    const auto gates = static_cast<std::int64_t>(gate_count(config.recurrent_cell));
    parts.emplace_back(std::string(cell_prefix(config.recurrent_cell)), gates * (conv_cc + c * c * kTaps));
  }
  parts.emplace_back("f_out", c * kImageChannels * kTaps + kImageChannels);
  return parts;
}

std::int64_t count_parameters(const NetworkConfig& config) {
  std::int64_t total = 0;
  for (const auto& [name, count] : parameter_breakdown(config)) total += count;
  return total;
}

template <typename T>
ParameterSet<T> build(const NetworkConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ParameterSet<T> params;
  for (const auto& [name, shape] : parameter_layout(config)) {
    std::vector<T> values(static_cast<std::size_t>(shape.numel()), T(0));
    if (name.back() == 'w') {
      const double bound = std::sqrt(1.0 / static_cast<double>(shape.c * kTaps));
      for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    params.add(name, Tensor<T>::from_vector(shape, std::move(values), true));
  }
  return params;
}

template <typename T>
RecurrentState<T> zero_state(std::int64_t batch, int channels, std::int64_t height, std::int64_t width) {
  const Shape s{batch, channels, height, width};
  return {Tensor<T>::zeros(s), Tensor<T>::zeros(s)};
}

namespace {

template <typename T>
void check_state(const RecurrentState<T>& state, const Tensor<T>& x) {
  if (!(state.h.shape() == x.shape())) {
    throw ShapeError("recurrent state " + state.h.shape().str() + " does not match input " +
                     x.shape().str());
  }
}

template <typename T>
Tensor<T> gate_preactivation(const ParameterSet<T>& params, RecurrentCell cell, std::string_view gate,
                             const Tensor<T>& x, const Tensor<T>& h) {
  const Tensor<T> from_x = conv2d(x, params[gate_param(cell, gate, "x", 'w')],
                                  params[gate_param(cell, gate, "x", 'b')]);
  const Tensor<T> from_h = conv2d(h, params[gate_param(cell, gate, "h", 'w')], Tensor<T>{});
  return add(from_x, from_h);
}

template <typename T>
Tensor<T> resblock(const ParameterSet<T>& params, int block, const Tensor<T>& x) {
  Tensor<T> out = relu(conv2d(x, params[res_name(block, 1, 'w')], params[res_name(block, 1, 'b')]));
  out = relu(conv2d(out, params[res_name(block, 2, 'w')], params[res_name(block, 2, 'b')]));
  return relu(add(out, x));
}

}  // namespace

template <typename T>
RecurrentState<T> lstm_cell(const ParameterSet<T>& params, const RecurrentState<T>& state,
                            const Tensor<T>& x) {
  check_state(state, x);
  constexpr auto cell = RecurrentCell::kLstm;
  const Tensor<T> i = sigmoid(gate_preactivation(params, cell, "i", x, state.h));
  const Tensor<T> f = sigmoid(gate_preactivation(params, cell, "f", x, state.h));
  const Tensor<T> g = tanh(gate_preactivation(params, cell, "g", x, state.h));
  const Tensor<T> o = sigmoid(gate_preactivation(params, cell, "o", x, state.h));
  Tensor<T> c = add(mul(f, state.c), mul(i, g));
  Tensor<T> h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

template <typename T>
RecurrentState<T> gru_cell(const ParameterSet<T>& params, const RecurrentState<T>& state,
                           const Tensor<T>& x) {
  check_state(state, x);
  constexpr auto cell = RecurrentCell::kGru;
  const Tensor<T> z = sigmoid(gate_preactivation(params, cell, "z", x, state.h));
  const Tensor<T> r = sigmoid(gate_preactivation(params, cell, "r", x, state.h));
  const Tensor<T> n = tanh(gate_preactivation(params, cell, "n", x, mul(r, state.h)));
  Tensor<T> h = add(mul(one_minus(z), n), mul(z, state.h));
  return {std::move(h), state.c};
}

template <typename T>
StageTrace<T> forward(const ParameterSet<T>& params, const NetworkConfig& config, const Tensor<T>& y,
                      std::optional<int> stop_at_stage) {
  config.validate();
  const Shape ys = y.shape();
  if (ys.c != kImageChannels) {
    throw ShapeError("network input must have 3 channels, got " + ys.str());
  }
  int stages = config.stages;
  if (stop_at_stage) {
    if (*stop_at_stage < 1 || *stop_at_stage > config.stages) {
      throw ContractError("stop_at_stage " + std::to_string(*stop_at_stage) + " outside [1, " +
                          std::to_string(config.stages) + "]");
    }
    stages = *stop_at_stage;
  }

  StageTrace<T> trace;
  trace.estimates.reserve(static_cast<std::size_t>(stages));
  RecurrentState<T> state;
  if (config.recurrent_cell != RecurrentCell::kNone) {
    state = zero_state<T>(ys.n, config.channels, ys.h, ys.w);
  }

  Tensor<T> x = y;
  for (int t = 1; t <= stages; ++t) {
    const Tensor<T> in = config.input_mode == InputMode::kConcatY ? concat_channels(x, y) : x;
    Tensor<T> feat = relu(conv2d(in, params["f_in.w"], params["f_in.b"]));
    switch (config.recurrent_cell) {
      case RecurrentCell::kNone:
        break;
      case RecurrentCell::kLstm:
        state = lstm_cell(params, state, feat);
        feat = state.h;
        break;
      case RecurrentCell::kGru:
        state = gru_cell(params, state, feat);
        feat = state.h;
        break;
    }
    for (int k = 0; k < config.resblock_count; ++k) {
      feat = resblock(params, config.resblock_mode == ResBlockMode::kRecursive ? 0 : k, feat);
    }
    Tensor<T> head = conv2d(feat, params["f_out.w"], params["f_out.b"]);
    if (config.output_mode == OutputMode::kResidual) {
      x = add(y, head);
      trace.residuals.push_back(std::move(head));
    } else {
      x = std::move(head);
    }
    trace.estimates.push_back(x);
  }
  return trace;
}

#define PRENET_INSTANTIATE_NETWORK(T)                                                              \
  template class ParameterSet<T>;                                                                  \
  template ParameterSet<T> build(const NetworkConfig&, std::uint64_t);                             \
  template RecurrentState<T> zero_state(std::int64_t, int, std::int64_t, std::int64_t);           \
  template RecurrentState<T> lstm_cell(const ParameterSet<T>&, const RecurrentState<T>&,           \
                                       const Tensor<T>&);                                          \
  template RecurrentState<T> gru_cell(const ParameterSet<T>&, const RecurrentState<T>&,            \
                                      const Tensor<T>&);                                           \
  template StageTrace<T> forward(const ParameterSet<T>&, const NetworkConfig&, const Tensor<T>&,   \
                                 std::optional<int>);

PRENET_INSTANTIATE_NETWORK(float)
PRENET_INSTANTIATE_NETWORK(double)

#undef PRENET_INSTANTIATE_NETWORK

}  // namespace prenet
