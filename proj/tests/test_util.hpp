#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "svc/tensor.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("svc_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

template <typename S = float>
svc::Tensor<S> random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  svc::Tensor<S> t(c, h, w);
  for (Eigen::Index i = 0; i < t.m.size(); ++i) t.m.data()[i] = static_cast<S>(u(rng));
  return t;
}

}  // namespace testutil
