#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "prenet/network.hpp"

namespace prenet {

// Optimizer state stored after the parameter blob so training can resume.
struct TrainerSnapshot {
  std::int64_t step = 0;
  // Next epoch to run.
  std::int32_t epoch = 0;
  std::vector<float> first_moment;
  std::vector<float> second_moment;
};

struct Checkpoint {
  NetworkConfig config;
  ParameterSet<float> params;
  std::optional<TrainerSnapshot> trainer;
};

/// Checkpoint layout, little-endian:
///
///   "PRNC" | u32 version (1) | u32 header_len | header | f32 blob | u32 crc32(blob)
///   [ "ADAM" | i64 step | i32 epoch | f32 m | f32 v | u32 crc32(section body) ]
///
/// The header is UTF-8 `key=value` lines covering every NetworkConfig field
/// plus `param_count` and `trainer` (0 or 1). The trainer section is present
/// exactly when `trainer=1`. Files are written to a temporary name and renamed.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const NetworkConfig& config, const TrainerSnapshot* trainer = nullptr);

// Raises IoError, FormatError (magic/version/header) or CorruptionError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace prenet
