#include "prenet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace prenet {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'N', 'C'};
constexpr char kTrainerMagic[4] = {'A', 'D', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;
// Headers are a handful of short lines; anything larger is not ours.
constexpr std::uint32_t kMaxHeader = 1 << 16;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void floats(std::span<const float> values) {
    for (float v : values) u32(std::bit_cast<std::uint32_t>(v));
  }
  std::size_t size() const { return buf_.size(); }
  std::span<const std::uint8_t> view(std::size_t from) const {
    return std::span<const std::uint8_t>(buf_).subspan(from);
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, const std::filesystem::path& path)
      : data_(data), path_(path) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw CorruptionError(path_.string() + ": truncated while reading " + what);
    }
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto b = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  std::vector<float> floats(std::size_t count, const char* what) {
    if (remaining() / 4 < count) {
      throw CorruptionError(path_.string() + ": truncated while reading " + what);
    }
    std::vector<float> out(count);
    for (auto& v : out) v = std::bit_cast<float>(u32(what));
    return out;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::span<const std::uint8_t> span(std::size_t from, std::size_t to) const {
    return data_.subspan(from, to - from);
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

std::string encode_header(const NetworkConfig& config, bool has_trainer) {
  std::ostringstream os;
  os << "recurrent_cell=" << to_string(config.recurrent_cell) << '\n'
     << "resblock_mode=" << to_string(config.resblock_mode) << '\n'
     << "stages=" << config.stages << '\n'
     << "input_mode=" << to_string(config.input_mode) << '\n'
     << "output_mode=" << to_string(config.output_mode) << '\n'
     << "channels=" << config.channels << '\n'
     << "resblock_count=" << config.resblock_count << '\n'
     << "param_count=" << count_parameters(config) << '\n'
     << "trainer=" << (has_trainer ? 1 : 0) << '\n';
  return os.str();
}

std::int64_t parse_int(const std::string& key, const std::string& value, const std::filesystem::path& path) {
  std::int64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError(path.string() + ": header key '" + key + "' is not an integer: '" + value + "'");
  }
  return out;
}

struct Header {
  NetworkConfig config;
  std::int64_t param_count = 0;
  bool has_trainer = false;
};

Header decode_header(std::string_view text, const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(path.string() + ": malformed header line '" + std::string(line) + "'");
    }
    if (!kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1))).second) {
      throw FormatError(path.string() + ": duplicate header key '" + std::string(line.substr(0, eq)) + "'");
    }
  }
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": header is missing '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  Header h;
  try {
    h.config.recurrent_cell = parse_recurrent_cell(take("recurrent_cell"));
    h.config.resblock_mode = parse_resblock_mode(take("resblock_mode"));
    h.config.input_mode = parse_input_mode(take("input_mode"));
    h.config.output_mode = parse_output_mode(take("output_mode"));
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  h.config.stages = static_cast<int>(parse_int("stages", take("stages"), path));
  h.config.channels = static_cast<int>(parse_int("channels", take("channels"), path));
  h.config.resblock_count = static_cast<int>(parse_int("resblock_count", take("resblock_count"), path));
  h.param_count = parse_int("param_count", take("param_count"), path);
  const auto trainer = parse_int("trainer", take("trainer"), path);
  if (trainer != 0 && trainer != 1) throw FormatError(path.string() + ": header 'trainer' must be 0 or 1");
  h.has_trainer = trainer == 1;
  if (!kv.empty()) throw FormatError(path.string() + ": unknown header key '" + kv.begin()->first + "'");
  try {
    h.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return h;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const NetworkConfig& config, const TrainerSnapshot* trainer) {
  const std::int64_t expected = count_parameters(config);
  if (params.total_count() != expected) {
    throw ContractError("save_checkpoint: parameter set holds " + std::to_string(params.total_count()) +
                        " values but config needs " + std::to_string(expected));
  }
  const std::string header = encode_header(config, trainer != nullptr);

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  const std::size_t blob_start = w.size();
  w.floats(params.flatten());
  w.u32(crc32_of(w.view(blob_start)));

  if (trainer) {
    if (static_cast<std::int64_t>(trainer->first_moment.size()) != expected ||
        static_cast<std::int64_t>(trainer->second_moment.size()) != expected) {
      throw ContractError("save_checkpoint: optimizer moments do not match parameter count");
    }
    w.bytes(kTrainerMagic, sizeof kTrainerMagic);
    const std::size_t body_start = w.size();
    w.u64(static_cast<std::uint64_t>(trainer->step));
    w.u32(static_cast<std::uint32_t>(trainer->epoch));
    w.floats(trainer->first_moment);
    w.floats(trainer->second_moment);
    w.u32(crc32_of(w.view(body_start)));
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(bytes, path);
  if (bytes.size() < sizeof kMagic || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError(path.string() + ": not a PRNC checkpoint (bad magic)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32("header length");
  if (header_len > kMaxHeader) throw FormatError(path.string() + ": header length " + std::to_string(header_len));
  const auto header_bytes = r.take(header_len, "header");
  const Header header = decode_header(
      std::string_view(reinterpret_cast<const char*>(header_bytes.data()), header_bytes.size()), path);

  const std::int64_t expected = count_parameters(header.config);
  if (header.param_count != expected) {
    throw CorruptionError(path.string() + ": header records " + std::to_string(header.param_count) +
                          " parameters but the configuration has " + std::to_string(expected));
  }

  const std::size_t blob_start = r.position();
  std::vector<float> blob = r.floats(static_cast<std::size_t>(expected), "parameter blob");
  const std::size_t blob_end = r.position();
  const std::uint32_t stored_crc = r.u32("blob checksum");
  if (stored_crc != crc32_of(r.span(blob_start, blob_end))) {
    throw CorruptionError(path.string() + ": parameter blob checksum mismatch");
  }

  std::optional<TrainerSnapshot> trainer;
  if (header.has_trainer) {
    const auto magic = r.take(4, "trainer section");
    if (!std::equal(kTrainerMagic, kTrainerMagic + 4, magic.begin())) {
      throw CorruptionError(path.string() + ": trainer section has bad magic");
    }
    const std::size_t body_start = r.position();
    TrainerSnapshot snap;
    snap.step = static_cast<std::int64_t>(r.u64("trainer step"));
    snap.epoch = static_cast<std::int32_t>(r.u32("trainer epoch"));
    snap.first_moment = r.floats(static_cast<std::size_t>(expected), "first moments");
    snap.second_moment = r.floats(static_cast<std::size_t>(expected), "second moments");
    const std::size_t body_end = r.position();
    if (r.u32("trainer checksum") != crc32_of(r.span(body_start, body_end))) {
      throw CorruptionError(path.string() + ": trainer section checksum mismatch");
    }
    trainer = std::move(snap);
  }
  if (r.remaining() != 0) {
    throw CorruptionError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }

  ParameterSet<float> params;
  std::size_t offset = 0;
  for (const auto& [name, shape] : parameter_layout(header.config)) {
    const auto n = static_cast<std::size_t>(shape.numel());
    std::vector<float> values(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                              blob.begin() + static_cast<std::ptrdiff_t>(offset + n));
    params.add(name, Tensor<float>::from_vector(shape, std::move(values), true));
    offset += n;
  }
  return Checkpoint{header.config, std::move(params), std::move(trainer)};
}

}  // namespace prenet
