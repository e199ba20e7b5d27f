#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "milattn/checkpoint.hpp"
#include "milattn/config.hpp"
#include "milattn/data.hpp"
#include "milattn/eval.hpp"
#include "milattn/model.hpp"

namespace milattn {

struct TrainOptions {
  RunConfig config;
  std::string manifest_path;
  std::string features_dir;       // base for relative feature paths
  std::string annotations_path;   // optional; enables AUC in cadence evals
  std::string out_dir;
  std::string resume_path;        // optional checkpoint to continue from
};

struct TrainStats {
  int iterations_run = 0;
  double last_total = 0.0;
  double last_detection = 0.0;
  double last_classification = 0.0;
  double last_attention = 0.0;
  std::string final_checkpoint;
  ModelParams params;
};

// The training loop: sample 30+30 videos, forward the whole batch on one
// graph, assemble the joint loss, backward, Adam step. Deterministic per
// (config, data): identical seeds give bit-identical checkpoints. A
// non-finite loss or gradient aborts with NumericError after writing
// last_good.ckpt (the parameters before the failed step).
TrainStats run_training(const TrainOptions& options, std::ostream& log);

// Finite-difference verification of the whole backward pass on a tiny
// config and a small random batch.
struct GradcheckOptions {
  ModelConfig model;  // must satisfy t <= 4, n <= 8
  uint64_t seed = 7;
  int videos_per_polarity = 2;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool corrupt_backward = false;  // negative-control hook
};

struct GradcheckRow {
  std::string name;
  std::string shape;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradcheckResult {
  std::vector<GradcheckRow> rows;
  bool pass = true;
};

GradcheckOptions default_gradcheck_options();
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace milattn
