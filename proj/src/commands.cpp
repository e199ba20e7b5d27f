#include "milattn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "milattn/checkpoint.hpp"
#include "milattn/errors.hpp"
#include "milattn/eval.hpp"

namespace fs = std::filesystem;

namespace milattn {

namespace {

template <typename Fn>
int guard(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// Writes every line to the training log file and mirrors it to the console.
class TeeStream : public std::ostream {
 public:
  TeeStream(const std::string& path, std::ostream& console)
      : std::ostream(&buf_), file_(path, std::ios::trunc), buf_(file_, console) {
    if (!file_) throw DataError("cannot open log file: " + path);
  }

 private:
  class Buf : public std::streambuf {
   public:
    Buf(std::ofstream& file, std::ostream& console) : file_(file), console_(console) {}

   protected:
    int overflow(int ch) override {
      if (ch != traits_type::eof()) {
        file_.put(static_cast<char>(ch));
        console_.put(static_cast<char>(ch));
      }
      return ch;
    }
    int sync() override {
      file_.flush();
      console_.flush();
      return 0;
    }

   private:
    std::ofstream& file_;
    std::ostream& console_;
  };

  std::ofstream file_;
  Buf buf_;
};

}  // namespace

int cmd_train(const TrainCli& cli) {
  return guard([&] {
    if (cli.manifest_path.empty()) throw UsageError("train requires --manifest");
    if (cli.out_dir.empty()) throw UsageError("train requires --out-dir");
    TrainOptions opt;
    if (!cli.config_path.empty()) opt.config = load_run_config(cli.config_path);
    if (cli.seed) opt.config.seed = *cli.seed;
    opt.manifest_path = cli.manifest_path;
    opt.features_dir =
        cli.features_dir.empty() ? fs::path(cli.manifest_path).parent_path().string()
                                 : cli.features_dir;
    opt.annotations_path = cli.annotations_path;
    opt.out_dir = cli.out_dir;
    opt.resume_path = cli.resume_path;

    fs::create_directories(cli.out_dir);
    TeeStream log((fs::path(cli.out_dir) / "train.log").string(), std::cout);
    TrainStats stats = run_training(opt, log);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "done: %d iterations, final total=%.9g (d=%.9g c=%.9g att=%.9g)\n",
                  stats.iterations_run, stats.last_total, stats.last_detection,
                  stats.last_classification, stats.last_attention);
    log << buf;
  });
}

int cmd_eval(const EvalCli& cli) {
  return guard([&] {
    if (cli.checkpoint_path.empty()) throw UsageError("eval requires --checkpoint");
    if (cli.manifest_path.empty()) throw UsageError("eval requires --manifest");
    if (cli.out_dir.empty()) throw UsageError("eval requires --out-dir");
    Checkpoint ckpt = load_checkpoint(cli.checkpoint_path);
    Manifest manifest = load_manifest(cli.manifest_path);
    AnnotationSet annotations;
    if (!cli.annotations_path.empty()) annotations = load_annotations(cli.annotations_path);
    FeatureStore features(cli.features_dir.empty()
                              ? fs::path(cli.manifest_path).parent_path().string()
                              : cli.features_dir,
                          ckpt.params.config.t);
    EvalOptions opt;
    opt.maa_include_normal = cli.maa_include_normal;
    opt.parallel = !cli.serial;
    EvalReport report = evaluate(ckpt.params, manifest, features, annotations, opt);
    save_eval_report(cli.out_dir, report);
    std::cout << format_eval_summary(report);
    std::cout << "report files written under " << cli.out_dir << "\n";
  });
}

int cmd_score(const ScoreCli& cli) {
  return guard([&] {
    if (cli.checkpoint_path.empty()) throw UsageError("score requires --checkpoint");
    if (cli.feature_path.empty()) throw UsageError("score requires --features");
    Checkpoint ckpt = load_checkpoint(cli.checkpoint_path);
    const ModelConfig& cfg = ckpt.params.config;
    ClipFeatures clips = load_features(cli.feature_path);
    if (clips.dim() != cfg.n)
      throw DataError("feature file has dim " + std::to_string(clips.dim()) +
                      ", checkpoint expects " + std::to_string(cfg.n));
    Tensor segments = segment_pool(clips, cfg.t);

    Graph g;
    ParamNodes nodes = bind_params(g, ckpt.params);
    ForwardTrace trace = model_forward(g, g.constant(segments), nodes, cfg);
    const Tensor& scores = g.value(trace.scores);

    char buf[160];
    std::printf("segment,score,alpha,beta\n");
    for (int t = 0; t < cfg.t; ++t) {
      std::printf("%d,%.17g,", t, scores[t]);
      if (trace.alpha != kInvalidNode) std::printf("%.17g", g.value(trace.alpha)[t]);
      std::printf(",");
      if (trace.beta != kInvalidNode) std::printf("%.17g", g.value(trace.beta)[t]);
      std::printf("\n");
    }
    std::printf("class,probability\n");
    const Tensor& posterior = g.value(trace.posterior);
    for (int k = 0; k < cfg.num_classes(); ++k) {
      std::snprintf(buf, sizeof buf, "%d,%.17g\n", k, posterior[k]);
      std::fputs(buf, stdout);
    }
  });
}

int cmd_synth(const SynthCli& cli) {
  return guard([&] {
    if (cli.out_dir.empty()) throw UsageError("synth requires --out-dir");
    SynthDataset ds = synth_generate(cli.spec, cli.seed, cli.out_dir);
    std::cout << "manifest: " << ds.manifest_path << "\n"
              << "annotations: " << ds.annotations_path << "\n"
              << "spec: " << ds.spec_path << "\n"
              << "videos: " << ds.manifest.records.size() << "\n";
  });
}

int cmd_gradcheck(const GradcheckCli& cli) {
  try {
    GradcheckResult result = run_gradcheck(cli.options);
    std::printf("%-12s %-12s %-14s %s\n", "parameter", "shape", "max_rel_err", "status");
    for (const GradcheckRow& row : result.rows) {
      std::printf("%-12s %-12s %-14.3e %s\n", row.name.c_str(), row.shape.c_str(),
                  row.max_rel_err, row.pass ? "PASS" : "FAIL");
    }
    std::printf("gradcheck: %s (tolerance %.1e)\n", result.pass ? "PASS" : "FAIL",
                cli.options.tolerance);
    return result.pass ? 0 : 3;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace milattn
