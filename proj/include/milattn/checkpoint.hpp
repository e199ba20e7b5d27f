#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "milattn/model.hpp"
#include "milattn/optimizer.hpp"
#include "milattn/tensor.hpp"

namespace milattn {

// Versioned binary checkpoint container, all integers and floats
// little-endian:
//   magic "MILATTN1"
//   model config: 11 x u32 (t, n, n_h, d_att1, n_det1, n_l, d_att2, n_cls,
//                           c, use_attn1, use_attn2)
//   u32 parameter count, then per parameter:
//     u32 name length, name bytes, u32 rank, u32 dims[rank], f64 data
//   optional optimizer section:
//     tag "ADAMSTT1", u64 step, f64 lr/beta1/beta2/eps,
//     per parameter: first-moment tensor then second-moment tensor
//     (u32 rank, u32 dims[rank], f64 data each)
// Round trips are byte-exact.

struct AdamSnapshot {
  int64_t step = 0;
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct Checkpoint {
  ModelParams params;
  std::optional<AdamSnapshot> optimizer;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamSnapshot* optimizer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace milattn
