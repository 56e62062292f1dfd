#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "amodal/tensor/grid.hpp"

namespace testing {

inline amodal::FeatureMap random_map(std::mt19937_64& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  amodal::FeatureMap m(h, w, c);
  for (double& v : m.data()) v = d(rng);
  return m;
}

inline amodal::BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p = 0.5) {
  std::bernoulli_distribution d(p);
  amodal::BinaryMask m(h, w);
  for (auto& b : m.bits()) b = d(rng) ? 1 : 0;
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("amodal-" + tag + "-" + std::to_string(rd()));
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

 private:
  std::filesystem::path path_;
};

}  // namespace testing
