#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include <unistd.h>

#include "cfsl/pack.hpp"
#include "cfsl/synthetic.hpp"

namespace cfsl::testkit {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cfsl-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

inline DatasetPack tiny_pack(std::uint32_t classes, std::uint32_t per_class, std::uint64_t seed = 1,
                             std::uint32_t side = 4, std::uint32_t channels = 1) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.samples_per_class = per_class;
  spec.height = side;
  spec.width = side;
  spec.channels = channels;
  spec.seed = seed;
  return make_synthetic_pack(spec);
}

inline std::shared_ptr<const DatasetPack> shared_tiny_pack(std::uint32_t classes,
                                                           std::uint32_t per_class,
                                                           std::uint64_t seed = 1,
                                                           std::uint32_t side = 4,
                                                           std::uint32_t channels = 1) {
  return std::make_shared<const DatasetPack>(tiny_pack(classes, per_class, seed, side, channels));
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cfsl::testkit
