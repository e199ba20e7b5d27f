#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "milattn/data.hpp"
#include "milattn/model.hpp"
#include "milattn/tensor.hpp"

namespace milattn {

// Frame j (0-based) receives the score of segment floor(j*T/n_frames),
// clamped to T-1.
std::vector<double> expand_scores(const Tensor& segment_scores, int64_t n_frames);

struct RocResult {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
  double auc = 0.0;
};

// Threshold sweep over distinct scores with trapezoidal area; equals the
// Mann-Whitney pair statistic. Requires both label classes present.
RocResult roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

struct ClassificationReport {
  std::vector<std::vector<int64_t>> confusion;  // [C+1][C+1], rows = truth
  std::vector<double> per_class_accuracy;       // -1 for classes absent from the test set
  std::vector<int> classes_present;
  double maa = 0.0;
};

// Prediction = argmax posterior (ties -> lowest index). mAA is the unweighted
// mean of per-class accuracy over classes present; include_normal controls
// whether class 0 joins the mean.
ClassificationReport classify_videos(std::span<const Tensor> posteriors,
                                     std::span<const int> labels, int num_classes,
                                     bool include_normal = true);

struct EvalReport {
  RocResult roc;
  ClassificationReport classification;
  int64_t frames_evaluated = 0;
  int videos_evaluated = 0;
  std::vector<std::string> warnings;
};

struct EvalOptions {
  bool maa_include_normal = true;
  bool parallel = true;
};

// Full test protocol: per-video forward (averaging detection scores and
// posteriors over crop views), segment-to-frame expansion, one global ROC
// over the concatenated test frames, classification metrics from posteriors.
EvalReport evaluate(const ModelParams& params, const Manifest& manifest,
                    FeatureStore& features, const AnnotationSet& annotations,
                    const EvalOptions& options = {});

// Report files: summary.txt (key = value), roc.csv (fpr,tpr), confusion.csv.
void save_eval_report(const std::string& dir, const EvalReport& report);
EvalReport load_eval_report(const std::string& dir);

std::string format_eval_summary(const EvalReport& report);

}  // namespace milattn
