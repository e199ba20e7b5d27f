#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace milattn {

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Dense row-major 64-bit float tensor. Rank 1 and 2 cover the whole model;
// scalars are rank-1 tensors of length 1.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor mat(int rows, int cols, std::vector<double> values);

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }

  // Rank-2 accessors. Hot path: rank is validated at op boundaries, not here.
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

  // Flat accessors.
  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const { return shape_to_string(shape); }

  // Checks data length against the shape product; throws ShapeError.
  void validate() const;
};

bool bits_equal(const Tensor& a, const Tensor& b);

}  // namespace milattn
