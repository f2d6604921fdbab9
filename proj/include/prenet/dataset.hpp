#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "prenet/tensor.hpp"

namespace prenet {

// How rain/ and norain/ files are matched.
enum class PairNaming {
  // rain/X.png <-> norain/X.png
  kIdentical,
  // rain/rain-X.png <-> norain/norain-X.png
  kPrefixed,
};

struct PairEntry {
  // Shared key: the filename, or X for prefixed naming.
  std::string name;
  std::filesystem::path rainy;
  std::filesystem::path clean;
};

struct PairedDataset {
  std::filesystem::path root;
  // Sorted by name, byte-wise.
  std::vector<PairEntry> pairs;
  // Human-readable problems found during the scan; empty when valid.
  std::vector<std::string> issues;

  bool valid() const { return issues.empty(); }
  // One "rainy<TAB>clean" line per pair.
  void write_manifest(std::ostream& os) const;
};

struct ScanOptions {
  PairNaming naming = PairNaming::kIdentical;
  // Raise ValidationError on the first issue instead of reporting it.
  bool strict = true;
  // Decode every pair to compare dimensions.
  bool check_dimensions = true;
};

PairedDataset scan_dataset(const std::filesystem::path& root, const ScanOptions& options = {});

struct ImagePair {
  std::string name;
  Tensor<float> rainy;
  Tensor<float> clean;
};

std::vector<ImagePair> load_pairs(const PairedDataset& dataset);

// Writes root/rain/<name> and root/norain/<name>, creating directories.
void write_pair(const std::filesystem::path& root, const std::string& name, const Tensor<float>& rainy,
                const Tensor<float>& clean);

}  // namespace prenet
