#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "milattn/data.hpp"
#include "milattn/train.hpp"

namespace milattn {

// Subcommand entry points shared by the CLI binary and the tests. Each
// returns a process exit code: 0 success, 1 usage error, 2 data error,
// 3 numerical failure.

struct TrainCli {
  std::string config_path;  // optional; defaults apply when empty
  std::string manifest_path;
  std::string features_dir;
  std::string annotations_path;
  std::string out_dir;
  std::string resume_path;
  std::optional<uint64_t> seed;  // overrides the config seed when set
};
int cmd_train(const TrainCli& cli);

struct EvalCli {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string features_dir;
  std::string annotations_path;
  std::string out_dir;
  bool maa_include_normal = true;
  bool serial = false;
};
int cmd_eval(const EvalCli& cli);

struct ScoreCli {
  std::string checkpoint_path;
  std::string feature_path;
};
int cmd_score(const ScoreCli& cli);

struct SynthCli {
  SynthSpec spec;
  uint64_t seed = 0;
  std::string out_dir;
};
int cmd_synth(const SynthCli& cli);

struct GradcheckCli {
  GradcheckOptions options;
};
int cmd_gradcheck(const GradcheckCli& cli);

}  // namespace milattn
