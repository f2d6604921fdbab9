#include "prenet/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "prenet/image_io.hpp"

namespace prenet {

namespace fs = std::filesystem;

namespace {

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

// Filename -> path for the PNGs directly inside `dir`.
std::map<std::string, fs::path> list_pngs(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_png(entry.path())) out.emplace(entry.path().filename().string(), entry.path());
  }
  return out;
}

std::string strip_prefix(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) == 0) return name.substr(prefix.size());
  return {};
}

// Reads only the IHDR chunk.
std::pair<std::int64_t, std::int64_t> png_dimensions(const fs::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open image '" + path.string() + "'");
  unsigned char buf[24];
  const std::size_t n = std::fread(buf, 1, sizeof buf, f);
  std::fclose(f);
  if (n != sizeof buf || png_sig_cmp(buf, 0, 8) != 0) throw IoError("'" + path.string() + "' is not a PNG file");
  auto be32 = [&](int off) {
    return (static_cast<std::int64_t>(buf[off]) << 24) | (static_cast<std::int64_t>(buf[off + 1]) << 16) |
           (static_cast<std::int64_t>(buf[off + 2]) << 8) | static_cast<std::int64_t>(buf[off + 3]);
  };
  return {be32(20), be32(16)};  // height, width
}

}  // namespace

void PairedDataset::write_manifest(std::ostream& os) const {
  for (const auto& p : pairs) os << p.rainy.string() << '\t' << p.clean.string() << '\n';
}

PairedDataset scan_dataset(const fs::path& root, const ScanOptions& options) {
  const fs::path rain_dir = root / "rain";
  const fs::path clean_dir = root / "norain";
  if (!fs::is_directory(rain_dir) || !fs::is_directory(clean_dir)) {
    throw IoError("dataset '" + root.string() + "' needs rain/ and norain/ subdirectories");
  }

  PairedDataset ds;
  ds.root = root;
  auto report = [&](std::string issue) {
    if (options.strict) throw ValidationError(issue);
    ds.issues.push_back(std::move(issue));
  };

  // key -> file, std::map keeps byte-wise lexicographic order.
  std::map<std::string, fs::path> rainy;
  std::map<std::string, fs::path> clean;
  for (const auto& [file, path] : list_pngs(rain_dir)) {
    std::string key = options.naming == PairNaming::kPrefixed ? strip_prefix(file, "rain-") : file;
    if (key.empty()) {
      report("rainy file without 'rain-' prefix: " + path.string());
      continue;
    }
    rainy.emplace(std::move(key), path);
  }
  for (const auto& [file, path] : list_pngs(clean_dir)) {
    std::string key = options.naming == PairNaming::kPrefixed ? strip_prefix(file, "norain-") : file;
    if (key.empty()) {
      report("clean file without 'norain-' prefix: " + path.string());
      continue;
    }
    clean.emplace(std::move(key), path);
  }

  for (const auto& [key, path] : rainy) {
    auto it = clean.find(key);
    if (it == clean.end()) {
      report("rainy image has no clean counterpart: " + path.string());
      continue;
    }
    if (options.check_dimensions && png_dimensions(path) != png_dimensions(it->second)) {
      report("dimension mismatch between " + path.string() + " and " + it->second.string());
      continue;
    }
    ds.pairs.push_back({key, path, it->second});
  }
  for (const auto& [key, path] : clean) {
    if (!rainy.contains(key)) report("clean image has no rainy counterpart: " + path.string());
  }
  return ds;
}

std::vector<ImagePair> load_pairs(const PairedDataset& dataset) {
  std::vector<ImagePair> out;
  out.reserve(dataset.pairs.size());
  for (const auto& p : dataset.pairs) {
    Tensor<float> rainy = load_image(p.rainy);
    Tensor<float> clean = load_image(p.clean);
    if (!(rainy.shape() == clean.shape())) {
      throw ValidationError("dimension mismatch between " + p.rainy.string() + " and " + p.clean.string());
    }
    out.push_back({p.name, std::move(rainy), std::move(clean)});
  }
  return out;
}

void write_pair(const fs::path& root, const std::string& name, const Tensor<float>& rainy,
                const Tensor<float>& clean) {
  fs::create_directories(root / "rain");
  fs::create_directories(root / "norain");
  save_image(rainy, root / "rain" / name);
  save_image(clean, root / "norain" / name);
}

}  // namespace prenet
