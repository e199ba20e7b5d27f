#include "milattn/optimizer.hpp"

#include <cmath>

#include "milattn/errors.hpp"

namespace milattn {

Adam::Adam(const AdamConfig& config, const ModelParams& params) : config_(config) {
  m_.reserve(params.entries.size());
  v_.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    m_.push_back(Tensor::zeros(e.value.shape));
    v_.push_back(Tensor::zeros(e.value.shape));
  }
}

void Adam::step(ModelParams& params, std::span<const Tensor> grads) {
  if (grads.size() != params.entries.size())
    throw UsageError("Adam::step: gradient count does not match parameter count");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params.entries[i].value))
      throw UsageError("Adam::step: gradient shape mismatch for " + params.entries[i].name);
    if (!grads[i].all_finite())
      throw NumericError("non-finite gradient for parameter " + params.entries[i].name);
  }

  double clip_scale = 1.0;
  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const Tensor& gt : grads)
      for (double v : gt.data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) clip_scale = config_.grad_clip / norm;
  }

  step_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < grads.size(); ++i) {
    Tensor& w = params.entries[i].value;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Tensor& gt = grads[i];
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double gj = gt[j] * clip_scale;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::restore(int64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw DataError("optimizer state tensor count does not match the model");
  for (size_t i = 0; i < m.size(); ++i) {
    if (!m[i].same_shape(m_[i]) || !v[i].same_shape(v_[i]))
      throw DataError("optimizer state shape mismatch at entry " + std::to_string(i));
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace milattn
