#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "tuckerpid/dataset_io.hpp"

namespace tuckerpid::fixture {

/// The shared synthetic fixture: 20 x 15 x 30 cells, true ranks (3,3,3),
/// 10% observed, noise sigma 0.01.
inline SyntheticSpec spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dims = {20, 15, 30};
  spec.ranks = {3, 3, 3};
  spec.observed_fraction = 0.10;
  spec.noise_sigma = 0.01;
  spec.seed = seed;
  return spec;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tuckerpid-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace tuckerpid::fixture
