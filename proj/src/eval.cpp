#include "milattn/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "milattn/errors.hpp"

namespace fs = std::filesystem;

namespace milattn {

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse number '" + s + "' in " + what);
  }
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> expand_scores(const Tensor& segment_scores, int64_t n_frames) {
  if (segment_scores.rank() != 1) throw ShapeError("expand_scores expects a rank-1 score vector");
  if (n_frames < 1) throw UsageError("expand_scores requires n_frames >= 1");
  const int64_t t = segment_scores.numel();
  std::vector<double> frames(static_cast<size_t>(n_frames));
  for (int64_t j = 0; j < n_frames; ++j) {
    int64_t seg = j * t / n_frames;
    if (seg > t - 1) seg = t - 1;
    frames[static_cast<size_t>(j)] = segment_scores[seg];
  }
  return frames;
}

RocResult roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size()) throw UsageError("roc_auc: score/label counts differ");
  if (scores.empty()) throw DataError("roc_auc on an empty sample");
  int64_t pos = 0, neg = 0;
  for (uint8_t l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw DataError("roc_auc requires both classes, got " + std::to_string(pos) + " positive and " +
                    std::to_string(neg) + " negative frames");

  std::vector<int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    return a < b;
  });

  RocResult out;
  out.points.emplace_back(0.0, 0.0);
  int64_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    // Advance over one group of tied scores so ties move diagonally.
    size_t j = i;
    const double s = scores[static_cast<size_t>(order[i])];
    while (j < order.size() && scores[static_cast<size_t>(order[j])] == s) {
      (labels[static_cast<size_t>(order[j])] ? tp : fp)++;
      ++j;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    out.points.emplace_back(fpr, tpr);
    out.auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  return out;
}

ClassificationReport classify_videos(std::span<const Tensor> posteriors,
                                     std::span<const int> labels, int num_classes,
                                     bool include_normal) {
  if (posteriors.empty()) throw DataError("classify_videos on an empty test set");
  if (posteriors.size() != labels.size())
    throw UsageError("classify_videos: posterior/label counts differ");

  ClassificationReport rep;
  rep.confusion.assign(static_cast<size_t>(num_classes),
                       std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  for (size_t v = 0; v < posteriors.size(); ++v) {
    const Tensor& y = posteriors[v];
    if (y.numel() != num_classes)
      throw ShapeError("posterior length " + std::to_string(y.numel()) + ", expected " +
                       std::to_string(num_classes));
    const int truth = labels[v];
    if (truth < 0 || truth >= num_classes)
      throw DataError("test label " + std::to_string(truth) + " out of range");
    int pred = 0;
    for (int k = 1; k < num_classes; ++k) {
      if (y[k] > y[pred]) pred = k;  // ties keep the lowest index
    }
    rep.confusion[static_cast<size_t>(truth)][static_cast<size_t>(pred)]++;
  }

  rep.per_class_accuracy.assign(static_cast<size_t>(num_classes), -1.0);
  double sum = 0.0;
  int counted = 0;
  for (int k = 0; k < num_classes; ++k) {
    int64_t row = 0;
    for (int64_t cell : rep.confusion[static_cast<size_t>(k)]) row += cell;
    if (row == 0) continue;
    rep.classes_present.push_back(k);
    const double acc =
        static_cast<double>(rep.confusion[static_cast<size_t>(k)][static_cast<size_t>(k)]) /
        static_cast<double>(row);
    rep.per_class_accuracy[static_cast<size_t>(k)] = acc;
    if (k == 0 && !include_normal) continue;
    sum += acc;
    ++counted;
  }
  if (counted == 0) throw DataError("no classes available for the mAA mean");
  rep.maa = sum / counted;
  return rep;
}

EvalReport evaluate(const ModelParams& params, const Manifest& manifest, FeatureStore& features,
                    const AnnotationSet& annotations, const EvalOptions& options) {
  const ModelConfig& cfg = params.config;
  const std::vector<int> test = manifest.indices(Split::kTest);
  if (test.empty()) throw DataError("manifest has no test videos");
  manifest.validate_labels(cfg.c);

  // Preload + pool everything serially (the cache is not thread-safe), and
  // surface dimension mismatches before any forward pass.
  for (int idx : test) {
    const VideoRecord& rec = manifest.records[static_cast<size_t>(idx)];
    if (rec.is_anomaly() && !annotations.has(rec.video_id))
      throw DataError("missing temporal annotation for anomaly test video " + rec.video_id);
    for (int v = 0; v < features.num_views(rec); ++v) {
      const Tensor& f = features.segment_features(rec, v);
      if (f.cols() != cfg.n)
        throw DataError("video " + rec.video_id + " has feature dim " + std::to_string(f.cols()) +
                        ", model expects " + std::to_string(cfg.n));
    }
  }

  const int count = static_cast<int>(test.size());
  std::vector<Tensor> video_scores(static_cast<size_t>(count));
  std::vector<Tensor> video_posteriors(static_cast<size_t>(count));

  // Per-video forward passes are independent: one confined Graph per video,
  // read-only params, results written to per-index slots.
#pragma omp parallel for schedule(dynamic) if (options.parallel)
  for (int vi = 0; vi < count; ++vi) {
    const VideoRecord& rec = manifest.records[static_cast<size_t>(test[static_cast<size_t>(vi)])];
    std::vector<Tensor> view_scores, view_posteriors;
    for (int v = 0; v < features.num_views(rec); ++v) {
      Graph g;
      ParamNodes nodes = bind_params(g, params);
      NodeId f = g.constant(features.segment_features(rec, v));
      ForwardTrace trace = model_forward(g, f, nodes, cfg);
      view_scores.push_back(g.value(trace.scores));
      view_posteriors.push_back(g.value(trace.posterior));
    }
    video_scores[static_cast<size_t>(vi)] = multiview_average(view_scores);
    video_posteriors[static_cast<size_t>(vi)] = multiview_average(view_posteriors);
  }

  EvalReport report;
  report.videos_evaluated = count;

  std::vector<double> frame_scores;
  std::vector<uint8_t> frame_labels;
  std::vector<int> labels;
  for (int vi = 0; vi < count; ++vi) {
    const VideoRecord& rec = manifest.records[static_cast<size_t>(test[static_cast<size_t>(vi)])];
    labels.push_back(rec.class_label);
    std::vector<double> frames =
        expand_scores(video_scores[static_cast<size_t>(vi)], rec.n_frames);
    std::vector<uint8_t> truth(frames.size(), 0);
    if (rec.is_anomaly()) {
      for (const auto& iv : annotations.intervals.at(rec.video_id)) {
        const int64_t lo = std::max<int64_t>(iv.first, 1) - 1;
        const int64_t hi = std::min<int64_t>(iv.second, rec.n_frames) - 1;
        for (int64_t f = lo; f <= hi; ++f) truth[static_cast<size_t>(f)] = 1;
      }
    }
    frame_scores.insert(frame_scores.end(), frames.begin(), frames.end());
    frame_labels.insert(frame_labels.end(), truth.begin(), truth.end());
  }
  report.frames_evaluated = static_cast<int64_t>(frame_scores.size());
  report.roc = roc_auc(frame_scores, frame_labels);
  report.classification =
      classify_videos(video_posteriors, labels, cfg.num_classes(), options.maa_include_normal);
  for (int k = 0; k < cfg.num_classes(); ++k) {
    if (report.classification.per_class_accuracy[static_cast<size_t>(k)] < 0.0)
      report.warnings.push_back("class " + std::to_string(k) +
                                " absent from the test split; excluded from mAA");
  }
  return report;
}

void save_eval_report(const std::string& dir, const EvalReport& report) {
  fs::create_directories(dir);

  std::ofstream summary(fs::path(dir) / "summary.txt", std::ios::trunc);
  if (!summary) throw DataError("cannot write eval summary under " + dir);
  summary << "auc = " << fmt_g17(report.roc.auc) << "\n";
  summary << "maa = " << fmt_g17(report.classification.maa) << "\n";
  summary << "frames_evaluated = " << report.frames_evaluated << "\n";
  summary << "videos_evaluated = " << report.videos_evaluated << "\n";
  summary << "per_class_accuracy =";
  for (size_t k = 0; k < report.classification.per_class_accuracy.size(); ++k)
    summary << (k ? ";" : " ") << fmt_g17(report.classification.per_class_accuracy[k]);
  summary << "\n";
  for (const std::string& w : report.warnings) summary << "warning = " << w << "\n";
  if (!summary.flush()) throw DataError("failed writing eval summary");

  std::ofstream roc(fs::path(dir) / "roc.csv", std::ios::trunc);
  roc << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : report.roc.points)
    roc << fmt_g17(fpr) << ',' << fmt_g17(tpr) << "\n";
  if (!roc.flush()) throw DataError("failed writing roc.csv");

  std::ofstream conf(fs::path(dir) / "confusion.csv", std::ios::trunc);
  const auto& cm = report.classification.confusion;
  conf << "true_class";
  for (size_t k = 0; k < cm.size(); ++k) conf << ",pred_" << k;
  conf << "\n";
  for (size_t i = 0; i < cm.size(); ++i) {
    conf << i;
    for (int64_t cell : cm[i]) conf << ',' << cell;
    conf << "\n";
  }
  if (!conf.flush()) throw DataError("failed writing confusion.csv");
}

EvalReport load_eval_report(const std::string& dir) {
  EvalReport report;

  std::ifstream summary(fs::path(dir) / "summary.txt");
  if (!summary) throw DataError("cannot open eval summary under " + dir);
  std::string line;
  while (std::getline(summary, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key == "auc") {
      report.roc.auc = parse_double(value, "auc");
    } else if (key == "maa") {
      report.classification.maa = parse_double(value, "maa");
    } else if (key == "frames_evaluated") {
      report.frames_evaluated = static_cast<int64_t>(parse_double(value, key));
    } else if (key == "videos_evaluated") {
      report.videos_evaluated = static_cast<int>(parse_double(value, key));
    } else if (key == "per_class_accuracy") {
      std::stringstream ss(value);
      std::string piece;
      while (std::getline(ss, piece, ';'))
        report.classification.per_class_accuracy.push_back(parse_double(strip(piece), key));
    } else if (key == "warning") {
      report.warnings.push_back(value);
    }
  }
  for (size_t k = 0; k < report.classification.per_class_accuracy.size(); ++k) {
    if (report.classification.per_class_accuracy[k] >= 0.0)
      report.classification.classes_present.push_back(static_cast<int>(k));
  }

  std::ifstream roc(fs::path(dir) / "roc.csv");
  if (!roc) throw DataError("cannot open roc.csv under " + dir);
  std::getline(roc, line);  // header
  while (std::getline(roc, line)) {
    if (strip(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed roc.csv row: " + line);
    report.roc.points.emplace_back(parse_double(strip(line.substr(0, comma)), "fpr"),
                                   parse_double(strip(line.substr(comma + 1)), "tpr"));
  }

  std::ifstream conf(fs::path(dir) / "confusion.csv");
  if (!conf) throw DataError("cannot open confusion.csv under " + dir);
  std::getline(conf, line);  // header
  while (std::getline(conf, line)) {
    if (strip(line).empty()) continue;
    std::stringstream ss(line);
    std::string piece;
    std::vector<int64_t> row;
    bool first = true;
    while (std::getline(ss, piece, ',')) {
      if (first) {
        first = false;
        continue;
      }
      row.push_back(static_cast<int64_t>(parse_double(strip(piece), "confusion")));
    }
    report.classification.confusion.push_back(std::move(row));
  }
  return report;
}

std::string format_eval_summary(const EvalReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "frame-level AUC: %.6f over %lld frames\n", report.roc.auc,
                static_cast<long long>(report.frames_evaluated));
  out += buf;
  std::snprintf(buf, sizeof buf, "mAA: %.6f over %d videos\n", report.classification.maa,
                report.videos_evaluated);
  out += buf;
  for (size_t k = 0; k < report.classification.per_class_accuracy.size(); ++k) {
    const double acc = report.classification.per_class_accuracy[k];
    if (acc < 0.0) {
      std::snprintf(buf, sizeof buf, "  class %zu: absent\n", k);
    } else {
      std::snprintf(buf, sizeof buf, "  class %zu accuracy: %.6f\n", k, acc);
    }
    out += buf;
  }
  for (const std::string& w : report.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace milattn
