#pragma once

// On-disk pack layout: a directory holding
//   manifest.json  {name, height, width, channels,
//                   classes: [{id, name, count, offsets: [byte offsets]}]}
//   blob.bin       raw HWC uint8 samples, concatenated
// Offsets index into blob.bin. Packs written here are always compact: samples
// appear in class order, then instance order.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsl/error.hpp"
#include "cfsl/image.hpp"

namespace cfsl {

struct ClassRecord {
  std::uint32_t id = 0;
  std::string name;
  std::vector<std::uint64_t> offsets;

  std::uint32_t count() const { return static_cast<std::uint32_t>(offsets.size()); }
  friend bool operator==(const ClassRecord&, const ClassRecord&) = default;
};

struct Manifest {
  std::string name;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<ClassRecord> classes;

  std::size_t sample_bytes() const { return std::size_t{height} * width * channels; }
  std::uint32_t num_classes() const { return static_cast<std::uint32_t>(classes.size()); }
  std::uint64_t total_samples() const {
    std::uint64_t n = 0;
    for (const auto& c : classes) n += c.count();
    return n;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : m.classes)
    classes.push_back({{"id", c.id}, {"name", c.name}, {"count", c.count()}, {"offsets", c.offsets}});
  return {{"name", m.name},
          {"height", m.height},
          {"width", m.width},
          {"channels", m.channels},
          {"classes", std::move(classes)}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.name = j.at("name").get<std::string>();
    m.height = j.at("height").get<std::uint32_t>();
    m.width = j.at("width").get<std::uint32_t>();
    m.channels = j.at("channels").get<std::uint32_t>();
    for (const auto& jc : j.at("classes")) {
      ClassRecord c;
      c.id = jc.at("id").get<std::uint32_t>();
      c.name = jc.at("name").get<std::string>();
      c.offsets = jc.at("offsets").get<std::vector<std::uint64_t>>();
      if (jc.at("count").get<std::uint64_t>() != c.offsets.size())
        throw Error(ErrorCode::PackFormat, "class '" + c.name + "': count != offsets length");
      m.classes.push_back(std::move(c));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PackFormat, e.what());
  }
}

/// Class-indexed image store. Immutable once built; share via
/// std::shared_ptr<const DatasetPack>.
class DatasetPack {
 public:
  DatasetPack() = default;

  /// Checks every invariant; throws PackFormat on violation.
  DatasetPack(Manifest manifest, std::vector<std::uint8_t> blob)
      : manifest_(std::move(manifest)), blob_(std::move(blob)) {
    validate();
  }

  const Manifest& manifest() const { return manifest_; }
  std::span<const std::uint8_t> blob() const { return blob_; }

  std::uint32_t height() const { return manifest_.height; }
  std::uint32_t width() const { return manifest_.width; }
  std::uint32_t channels() const { return manifest_.channels; }
  std::size_t sample_bytes() const { return manifest_.sample_bytes(); }
  std::uint32_t num_classes() const { return manifest_.num_classes(); }
  std::uint32_t class_size(std::uint32_t class_id) const {
    return manifest_.classes.at(class_id).count();
  }

  std::span<const std::uint8_t> sample(std::uint32_t class_id, std::uint32_t instance) const {
    const auto offset = manifest_.classes.at(class_id).offsets.at(instance);
    return std::span<const std::uint8_t>(blob_).subspan(offset, sample_bytes());
  }

  ImageView image(std::uint32_t class_id, std::uint32_t instance) const {
    return {height(), width(), channels(), sample(class_id, instance)};
  }

  friend bool operator==(const DatasetPack&, const DatasetPack&) = default;

 private:
  void validate() const {
    const auto& m = manifest_;
    if (m.height == 0 || m.width == 0 || m.channels == 0)
      throw Error(ErrorCode::PackFormat, "zero image dimension");
    if (blob_.size() != m.total_samples() * m.sample_bytes())
      throw Error(ErrorCode::PackFormat, "blob length " + std::to_string(blob_.size()) +
                                             " != samples x sample bytes");
    for (std::size_t i = 0; i < m.classes.size(); ++i) {
      const auto& c = m.classes[i];
      if (c.id != i) throw Error(ErrorCode::PackFormat, "class ids must be dense 0..n-1");
      for (auto off : c.offsets)
        if (off > blob_.size() || blob_.size() - off < m.sample_bytes())
          throw Error(ErrorCode::PackFormat, "offset out of range in class '" + c.name + "'");
    }
  }

  Manifest manifest_;
  std::vector<std::uint8_t> blob_;
};

/// Appends samples class by class into a compact blob.
class PackBuilder {
 public:
  PackBuilder(std::string name, std::uint32_t height, std::uint32_t width, std::uint32_t channels) {
    manifest_.name = std::move(name);
    manifest_.height = height;
    manifest_.width = width;
    manifest_.channels = channels;
  }

  std::uint32_t add_class(std::string name) {
    const auto id = manifest_.num_classes();
    manifest_.classes.push_back({id, std::move(name), {}});
    return id;
  }

  void add_sample(std::uint32_t class_id, std::span<const std::uint8_t> pixels) {
    if (pixels.size() != manifest_.sample_bytes())
      throw Error(ErrorCode::PackFormat, "sample is " + std::to_string(pixels.size()) +
                                             " bytes, expected " +
                                             std::to_string(manifest_.sample_bytes()));
    manifest_.classes.at(class_id).offsets.push_back(blob_.size());
    blob_.insert(blob_.end(), pixels.begin(), pixels.end());
  }

  DatasetPack build() && { return DatasetPack(std::move(manifest_), std::move(blob_)); }

 private:
  Manifest manifest_;
  std::vector<std::uint8_t> blob_;
};

// -- disk I/O -----------------------------------------------------------------

inline void write_pack(const DatasetPack& pack, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorCode::PackFormat, "cannot write " + (dir / "manifest.json").string());
    out << to_json(pack.manifest()).dump() << '\n';
  }
  std::ofstream blob(dir / "blob.bin", std::ios::binary);
  if (!blob) throw Error(ErrorCode::PackFormat, "cannot write " + (dir / "blob.bin").string());
  blob.write(reinterpret_cast<const char*>(pack.blob().data()),
             static_cast<std::streamsize>(pack.blob().size()));
}

inline Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::PackFormat, "no manifest.json in " + dir.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::PackFormat, dir.string() + ": " + e.what());
  }
}

inline DatasetPack read_pack(const std::filesystem::path& dir) {
  auto manifest = read_manifest(dir);
  std::ifstream in(dir / "blob.bin", std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::PackFormat, "no blob.bin in " + dir.string());
  std::vector<std::uint8_t> blob(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  return DatasetPack(std::move(manifest), std::move(blob));
}

// -- construction -------------------------------------------------------------

/// Builds a pack from `source/<class-name>/<image files>`. Classes and images
/// are taken in lexicographic order; every image is box-filtered to
/// resolution x resolution. Channel count comes from `channels` or, if unset,
/// from the first image read; gray images are promoted to RGB when needed.
inline DatasetPack ingest(const std::filesystem::path& source, std::uint32_t resolution,
                          std::optional<std::uint32_t> channels = std::nullopt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(source)) throw Error(ErrorCode::EmptySource, source.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(source))
    if (entry.is_directory() && entry.path().filename().string().front() != '.')
      class_dirs.push_back(entry.path());
  if (class_dirs.empty()) throw Error(ErrorCode::EmptySource, "no class directories in " + source.string());
  std::sort(class_dirs.begin(), class_dirs.end());

  std::optional<PackBuilder> builder;
  for (const auto& class_dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dir))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    if (files.empty()) throw Error(ErrorCode::Ingest, "no images in " + class_dir.string());
    std::sort(files.begin(), files.end());

    std::uint32_t class_id = 0;
    bool first_in_class = true;
    for (const auto& file : files) {
      Image img;
      try {
        img = read_image(file);
        if (!channels) channels = img.channels;
        img = convert_channels(std::move(img), *channels);
        img = box_downsample(img, resolution);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::UpsampleUnsupported)
          throw Error(ErrorCode::UpsampleUnsupported, file.string() + ": " + e.what());
        throw Error(ErrorCode::Ingest, file.string() + ": " + e.what());
      }
      if (!builder) builder.emplace(source.filename().string(), resolution, resolution, *channels);
      if (first_in_class) {
        class_id = builder->add_class(class_dir.filename().string());
        first_in_class = false;
      }
      builder->add_sample(class_id, img.pixels);
    }
  }
  return std::move(*builder).build();
}

/// Keeps the first min(max_per_class, count) samples of every class.
inline DatasetPack slim(const DatasetPack& pack, std::uint32_t max_per_class) {
  if (max_per_class < 1) throw Error(ErrorCode::Config, "max_per_class >= 1 required");
  const auto& m = pack.manifest();
  PackBuilder builder(m.name, m.height, m.width, m.channels);
  for (const auto& c : m.classes) {
    const auto id = builder.add_class(c.name);
    const auto keep = std::min(max_per_class, c.count());
    for (std::uint32_t i = 0; i < keep; ++i) builder.add_sample(id, pack.sample(c.id, i));
  }
  return std::move(builder).build();
}

/// Class counts for (train, val, test), taken contiguously in manifest order.
struct SplitSpec {
  std::uint32_t train = 0;
  std::uint32_t val = 0;
  std::uint32_t test = 0;
};

struct SplitPacks {
  DatasetPack train;
  DatasetPack val;
  DatasetPack test;
};

inline SplitPacks split_by_class(const DatasetPack& pack, const SplitSpec& spec) {
  const auto& m = pack.manifest();
  if (std::uint64_t{spec.train} + spec.val + spec.test != m.num_classes())
    throw Error(ErrorCode::Split, std::to_string(spec.train) + "+" + std::to_string(spec.val) +
                                      "+" + std::to_string(spec.test) + " != " +
                                      std::to_string(m.num_classes()) + " classes");
  auto take = [&](std::uint32_t first, std::uint32_t count, const char* suffix) {
    PackBuilder builder(m.name + "-" + suffix, m.height, m.width, m.channels);
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto& c = m.classes[first + k];
      const auto id = builder.add_class(c.name);
      for (std::uint32_t i = 0; i < c.count(); ++i) builder.add_sample(id, pack.sample(c.id, i));
    }
    return std::move(builder).build();
  };
  return {take(0, spec.train, "train"), take(spec.train, spec.val, "val"),
          take(spec.train + spec.val, spec.test, "test")};
}

inline constexpr std::uint64_t kSizeCriterionBytes = 16ULL << 30;

struct SuitabilityReport {
  std::uint32_t num_classes = 0;
  std::uint32_t samples_per_class_min = 0;
  std::uint32_t samples_per_class_max = 0;
  std::uint64_t total_images = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::uint64_t blob_bytes = 0;
  std::uint64_t manifest_bytes = 0;
  std::uint64_t estimated_in_memory_bytes = 0;  // blob + manifest
  std::uint64_t estimated_float32_bytes = 0;    // pixels held as float32 + manifest
  bool passes_size_criterion = false;
};

inline SuitabilityReport stats(const Manifest& m) {
  SuitabilityReport r;
  r.num_classes = m.num_classes();
  r.height = m.height;
  r.width = m.width;
  r.channels = m.channels;
  r.total_images = m.total_samples();
  if (!m.classes.empty()) {
    r.samples_per_class_min = r.samples_per_class_max = m.classes.front().count();
    for (const auto& c : m.classes) {
      r.samples_per_class_min = std::min(r.samples_per_class_min, c.count());
      r.samples_per_class_max = std::max(r.samples_per_class_max, c.count());
    }
  }
  r.blob_bytes = r.total_images * m.sample_bytes();
  r.manifest_bytes = to_json(m).dump().size();
  r.estimated_in_memory_bytes = r.blob_bytes + r.manifest_bytes;
  r.estimated_float32_bytes = 4 * r.blob_bytes + r.manifest_bytes;
  r.passes_size_criterion = r.estimated_in_memory_bytes <= kSizeCriterionBytes;
  return r;
}

inline SuitabilityReport stats(const DatasetPack& pack) { return stats(pack.manifest()); }

inline nlohmann::json to_json(const SuitabilityReport& r) {
  return {{"num_classes", r.num_classes},
          {"samples_per_class_min", r.samples_per_class_min},
          {"samples_per_class_max", r.samples_per_class_max},
          {"total_images", r.total_images},
          {"resolution", {r.height, r.width, r.channels}},
          {"blob_bytes", r.blob_bytes},
          {"manifest_bytes", r.manifest_bytes},
          {"estimated_in_memory_bytes", r.estimated_in_memory_bytes},
          {"estimated_float32_bytes", r.estimated_float32_bytes},
          {"passes_size_criterion", r.passes_size_criterion}};
}

}  // namespace cfsl
