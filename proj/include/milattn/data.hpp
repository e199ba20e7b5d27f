#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "milattn/rng.hpp"
#include "milattn/tensor.hpp"

namespace milattn {

enum class Split { kTrain, kTest };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct VideoRecord {
  std::string video_id;
  Split split = Split::kTrain;
  int class_label = 0;  // 0 = Normal, 1..C anomaly classes
  int64_t n_frames = 0;
  std::vector<std::string> feature_paths;  // one per crop view

  bool is_anomaly() const { return class_label != 0; }
};

// CSV manifest: header `video_id,split,class_label,n_frames,feature_paths`,
// feature paths ';'-separated. Rejects duplicate ids, negative labels,
// malformed rows.
struct Manifest {
  std::vector<VideoRecord> records;

  std::vector<int> indices(Split split) const;
  // Throws DataError when any label exceeds num_anomaly_classes.
  void validate_labels(int num_anomaly_classes) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& m);

// Per-clip features, one n-dim row per consecutive clip.
struct ClipFeatures {
  Tensor features;  // [M x n]
  int clips() const { return features.rows(); }
  int dim() const { return features.cols(); }
};

// Binary feature file: magic "FEAT0001", u32 LE M and n, then M*n f32 LE
// values (widened to f64 on load). Round trips are byte-exact.
ClipFeatures load_features(const std::string& path);
void save_features(const std::string& path, const ClipFeatures& clips);

// Stage A/B pooling: segment t is the elementwise max over clip rows
// [floor(t*M/T), floor((t+1)*M/T)); an empty range (M < T) copies clip row
// min(floor(t*M/T), M-1).
Tensor segment_pool(const ClipFeatures& clips, int t_segments);

// Anomalous frame intervals per video, 1-based inclusive. Normal videos are
// simply absent. Overlapping intervals are merged on load.
struct AnnotationSet {
  std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> intervals;

  bool has(const std::string& video_id) const { return intervals.count(video_id) > 0; }
};

AnnotationSet load_annotations(const std::string& path);
void save_annotations(const std::string& path, const AnnotationSet& a);

// Uniform without-replacement sampler for MIL mini-batches: anomaly indices
// first, then normal indices, deterministic per seed.
class BatchSampler {
 public:
  BatchSampler(const Manifest& manifest, std::span<const int> pool, int anomaly_count,
               int normal_count, uint64_t seed);

  struct Batch {
    std::vector<int> anomaly;  // manifest record indices
    std::vector<int> normal;
  };
  Batch next();

  int anomaly_pool_size() const { return static_cast<int>(anomaly_pool_.size()); }
  int normal_pool_size() const { return static_cast<int>(normal_pool_.size()); }

 private:
  std::vector<int> anomaly_pool_;
  std::vector<int> normal_pool_;
  int anomaly_count_;
  int normal_count_;
  Rng rng_;
};

// Arithmetic mean of per-view score vectors; a single view passes through.
Tensor multiview_average(std::span<const Tensor> views);

// Synthetic planted-anomaly dataset. Normal clips are N(mu0, sigma^2 I)
// around a shared background mean; each anomaly video carries one contiguous
// clip run shifted by delta along its class's unit direction (directions
// orthonormal across classes).
struct SynthSpec {
  int n = 64;               // feature dimension
  int t = 32;               // segments downstream models will use
  int c = 3;                // anomaly classes
  int train_per_class = 60; // anomaly videos per class, train split
  int test_per_class = 20;  // anomaly videos per class, test split
  int clips_per_video = 64;
  int frames_per_clip = 64;
  double anomaly_fraction = 0.2;  // planted run length as a fraction of clips
  double delta = 1.0;             // class-direction magnitude
  double sigma = 0.25;            // noise level
  int views = 1;
};

struct SynthDataset {
  Manifest manifest;
  AnnotationSet annotations;
  std::string manifest_path;
  std::string annotations_path;
  std::string spec_path;
};

// Writes manifest.csv, annotations.csv, synth_spec.txt and features/ under
// out_dir. Deterministic per (spec, seed).
SynthDataset synth_generate(const SynthSpec& spec, uint64_t seed, const std::string& out_dir);

// Pools features on first use and caches them; read-only afterwards.
class FeatureStore {
 public:
  FeatureStore(std::string base_dir, int t_segments);

  // Pooled [T x n] features for one view of a record.
  const Tensor& segment_features(const VideoRecord& rec, int view);
  int num_views(const VideoRecord& rec) const { return static_cast<int>(rec.feature_paths.size()); }
  std::string resolve(const std::string& relative_path) const;

 private:
  std::string base_dir_;
  int t_segments_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace milattn
