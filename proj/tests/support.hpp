#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include "milattn/rng.hpp"
#include "milattn/tensor.hpp"

namespace testsupport {

inline milattn::Tensor random_tensor(std::vector<int> shape, milattn::Rng& rng, double lo = -2.0,
                                     double hi = 2.0) {
  milattn::Tensor t = milattn::Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central finite differences of a scalar function of one tensor, the
// independent oracle for every gradient assertion.
inline milattn::Tensor finite_difference(
    const std::function<double(const milattn::Tensor&)>& f, milattn::Tensor x,
    double h = 1e-5) {
  milattn::Tensor grad = milattn::Tensor::zeros(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_err(const milattn::Tensor& a, const milattn::Tensor& b,
                          double denom_floor = 1e-6) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), denom_floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Unique per-call scratch directory under the system temp dir, removed on
// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path() / ("milattn_" + tag + "_XXXXXX");
    std::string templ = base.string();
    if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

}  // namespace testsupport
