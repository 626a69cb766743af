#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mac/random.hpp"
#include "mac/tensor.hpp"

namespace mac::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, bool requires_grad = true,
                            double bound = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from(rows, cols, std::move(v), requires_grad);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mac_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace mac::testing
