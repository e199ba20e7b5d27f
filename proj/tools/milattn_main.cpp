// milattn command-line interface: train / eval / score / synth / gradcheck.

#include <CLI11.hpp>
#include <cstdint>
#include <optional>

#include "milattn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised joint anomaly detection and classification "
               "over precomputed video-segment features"};
  app.require_subcommand(1);

  milattn::TrainCli train;
  std::optional<uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a manifest");
  train_cmd->add_option("--config", train.config_path, "Run configuration file (key = value)");
  train_cmd->add_option("--manifest", train.manifest_path, "Training manifest CSV")->required();
  train_cmd->add_option("--features-dir", train.features_dir,
                        "Base directory for relative feature paths (default: manifest directory)");
  train_cmd->add_option("--annotations", train.annotations_path,
                        "Temporal annotations CSV (enables AUC in cadence evals)");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--resume", train.resume_path, "Checkpoint to resume from");
  train_cmd->add_option("--seed", train_seed, "Override the config seed");

  milattn::EvalCli eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Model checkpoint")->required();
  eval_cmd->add_option("--manifest", eval.manifest_path, "Manifest CSV")->required();
  eval_cmd->add_option("--features-dir", eval.features_dir, "Base directory for feature paths");
  eval_cmd->add_option("--annotations", eval.annotations_path, "Temporal annotations CSV");
  eval_cmd->add_option("--out-dir", eval.out_dir, "Report output directory")->required();
  eval_cmd->add_flag("!--exclude-normal-from-maa", eval.maa_include_normal,
                     "Exclude the Normal class from the mAA mean");
  eval_cmd->add_flag("--serial", eval.serial, "Disable parallel per-video evaluation");

  milattn::ScoreCli score;
  auto* score_cmd = app.add_subcommand("score", "Score one feature file with a checkpoint");
  score_cmd->add_option("--checkpoint", score.checkpoint_path, "Model checkpoint")->required();
  score_cmd->add_option("--features", score.feature_path, "Feature file")->required();

  milattn::SynthCli synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-anomaly synthetic dataset");
  synth_cmd->add_option("--n", synth.spec.n, "Feature dimension");
  synth_cmd->add_option("--t", synth.spec.t, "Temporal segments (recorded for training configs)");
  synth_cmd->add_option("--classes", synth.spec.c, "Anomaly class count");
  synth_cmd->add_option("--train-per-class", synth.spec.train_per_class,
                        "Anomaly training videos per class");
  synth_cmd->add_option("--test-per-class", synth.spec.test_per_class,
                        "Anomaly test videos per class");
  synth_cmd->add_option("--clips", synth.spec.clips_per_video, "Clips per video");
  synth_cmd->add_option("--frames-per-clip", synth.spec.frames_per_clip, "Frames per clip");
  synth_cmd->add_option("--fraction", synth.spec.anomaly_fraction,
                        "Planted run length as a fraction of clips");
  synth_cmd->add_option("--delta", synth.spec.delta, "Class-direction magnitude");
  synth_cmd->add_option("--sigma", synth.spec.sigma, "Noise level");
  synth_cmd->add_option("--views", synth.spec.views, "Crop views per video");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  milattn::GradcheckCli gradcheck;
  gradcheck.options = milattn::default_gradcheck_options();
  auto* gc_cmd = app.add_subcommand("gradcheck",
                                    "Finite-difference check of backward on a tiny config");
  gc_cmd->add_option("--t", gradcheck.options.model.t, "Temporal segments (max 4)");
  gc_cmd->add_option("--n", gradcheck.options.model.n, "Feature dimension (max 8)");
  gc_cmd->add_option("--n-h", gradcheck.options.model.n_h, "LSTM hidden units");
  gc_cmd->add_option("--n-det1", gradcheck.options.model.n_det1, "Detection layer-1 width");
  gc_cmd->add_option("--n-l", gradcheck.options.model.n_l, "Detection layer-2 width");
  gc_cmd->add_option("--d-att1", gradcheck.options.model.d_att1, "First attention latent width");
  gc_cmd->add_option("--d-att2", gradcheck.options.model.d_att2, "Second attention latent width");
  gc_cmd->add_option("--n-cls", gradcheck.options.model.n_cls, "Classification hidden width");
  gc_cmd->add_option("--classes", gradcheck.options.model.c, "Anomaly class count");
  gc_cmd->add_option("--seed", gradcheck.options.seed, "Seed for parameters and batch");
  gc_cmd->add_option("--tolerance", gradcheck.options.tolerance, "Relative-error tolerance");
  gc_cmd->add_flag("--corrupt-backward", gradcheck.options.corrupt_backward,
                   "Deliberately corrupt backward (negative control)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  if (train_cmd->parsed()) {
    train.seed = train_seed;
    return milattn::cmd_train(train);
  }
  if (eval_cmd->parsed()) return milattn::cmd_eval(eval);
  if (score_cmd->parsed()) return milattn::cmd_score(score);
  if (synth_cmd->parsed()) return milattn::cmd_synth(synth);
  if (gc_cmd->parsed()) return milattn::cmd_gradcheck(gradcheck);
  return 1;
}
