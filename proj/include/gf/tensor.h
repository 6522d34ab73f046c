#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

// Dense row-major matrix of doubles. Deliberately minimal: the pipeline only
// needs storage, indexing and a few bulk operations, which live in kernels.h.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return a.size(); }
  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

// On-disk tensor container: 8-byte magic "GFTENSOR", a 4-byte little-endian
// JSON header length, the JSON header {"dtype":...,"shape":[...],"order":
// "row-major"}, then the little-endian payload. dtype is "f32" or "f64";
// data is held as double in memory either way.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  const std::string& dtype = "f64");
Tensor read_tensor(const std::filesystem::path& path);

// Convenience wrappers for the common matrix/vector cases.
void write_tensor(const std::filesystem::path& path, const Mat& m,
                  const std::string& dtype = "f64");
void write_tensor(const std::filesystem::path& path, const std::vector<double>& v,
                  const std::string& dtype = "f64");
Mat read_tensor_mat(const std::filesystem::path& path);
std::vector<double> read_tensor_vec(const std::filesystem::path& path);

}  // namespace gf
