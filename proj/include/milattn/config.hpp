#pragma once

#include <cstdint>
#include <string>

#include "milattn/losses.hpp"
#include "milattn/model.hpp"
#include "milattn/optimizer.hpp"

namespace milattn {

// One flat `key = value` file drives a whole run. Unknown keys are rejected;
// serialize() echoes every effective value, and reloading that echo
// reproduces the run bit-exactly.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  AdamConfig adam;

  int batch_anomaly = 30;
  int batch_normal = 30;
  int iterations = 8000;
  uint64_t seed = 0;
  int eval_every = 500;       // 0 disables cadence evaluation
  int checkpoint_every = 500; // 0 disables periodic checkpoints
  double holdout_fraction = 0.1;
  bool save_optimizer_state = true;
  bool maa_include_normal = true;

  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& config);

}  // namespace milattn
