#include "milattn/tensor.hpp"

#include <cmath>
#include <cstring>

#include "milattn/errors.hpp"

namespace milattn {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  int64_t n = shape_numel(shape);
  t.shape = std::move(shape);
  t.data.assign(static_cast<size_t>(n), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data) v = value;
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.shape = {1};
  t.data = {value};
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  Tensor t;
  t.shape = {static_cast<int>(values.size())};
  t.data = std::move(values);
  t.validate();
  return t;
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> values) {
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(values);
  t.validate();
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
  return shape[1];
}

double& Tensor::at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }

double Tensor::at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::validate() const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("tensor data length " + std::to_string(numel()) +
                     " does not match shape " + shape_str());
  }
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  if (a.data.size() != b.data.size()) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace milattn
