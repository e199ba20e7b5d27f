#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "milattn/model.hpp"
#include "milattn/tensor.hpp"

namespace milattn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clipping; 0 disables (the default — the reference
  // setup uses none).
  double grad_clip = 0.0;
};

// Bias-corrected Adam. Moment tensors are kept in parameter entry order and
// updated in place; steps must be serialized by the caller.
class Adam {
 public:
  Adam(const AdamConfig& config, const ModelParams& params);

  // Applies one update. grads must match params.entries in order and shape;
  // a non-finite gradient aborts with a NumericError naming the parameter.
  void step(ModelParams& params, std::span<const Tensor> grads);

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  std::span<const Tensor> first_moments() const { return m_; }
  std::span<const Tensor> second_moments() const { return v_; }

  // Restores optimizer state from a checkpoint.
  void restore(int64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig config_;
  int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace milattn
