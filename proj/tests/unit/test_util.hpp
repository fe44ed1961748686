#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "bleg/numerics/tensor.hpp"
#include "bleg/rng.hpp"

namespace testing {

inline bleg::numerics::Tensor random_tensor(bleg::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  auto t = bleg::numerics::Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bleg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace testing
