#include "milattn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "milattn/errors.hpp"

namespace fs = std::filesystem;

namespace milattn {

namespace {

constexpr char kFeatureMagic[8] = {'F', 'E', 'A', 'T', '0', '0', '0', '1'};
constexpr uint32_t kMaxFeatureDim = 1u << 24;
constexpr uint64_t kMaxFeatureElems = 1ull << 30;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse integer '" + s + "' in " + what);
  }
}

void put_u32le(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

uint32_t get_u32le(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw TruncatedError("truncated " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + s + "' (expected train or test)");
}

std::vector<int> Manifest::indices(Split split) const {
  std::vector<int> out;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(static_cast<int>(i));
  }
  return out;
}

void Manifest::validate_labels(int num_anomaly_classes) const {
  for (const VideoRecord& r : records) {
    if (r.class_label > num_anomaly_classes)
      throw DataError("video " + r.video_id + " has class label " +
                      std::to_string(r.class_label) + " but the model has " +
                      std::to_string(num_anomaly_classes) + " anomaly classes");
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + path);
  if (strip(line) != "video_id,split,class_label,n_frames,feature_paths")
    throw DataError("manifest header mismatch in " + path);

  Manifest m;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto fields = split_on(strip(line), ',');
    if (fields.size() != 5)
      throw DataError("manifest line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected 5");
    VideoRecord r;
    r.video_id = strip(fields[0]);
    if (r.video_id.empty())
      throw DataError("manifest line " + std::to_string(line_no) + ": empty video_id");
    if (!seen.insert(r.video_id).second)
      throw DataError("duplicate video_id '" + r.video_id + "' in manifest");
    r.split = parse_split(strip(fields[1]));
    int64_t label = parse_int(strip(fields[2]), "class_label");
    if (label < 0) throw DataError("video " + r.video_id + " has negative class label");
    r.class_label = static_cast<int>(label);
    r.n_frames = parse_int(strip(fields[3]), "n_frames");
    if (r.n_frames < 1) throw DataError("video " + r.video_id + " has n_frames < 1");
    for (const std::string& p : split_on(strip(fields[4]), ';')) {
      if (!strip(p).empty()) r.feature_paths.push_back(strip(p));
    }
    if (r.feature_paths.empty())
      throw DataError("video " + r.video_id + " lists no feature paths");
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open manifest for writing: " + path);
  out << "video_id,split,class_label,n_frames,feature_paths\n";
  for (const VideoRecord& r : m.records) {
    out << r.video_id << ',' << split_name(r.split) << ',' << r.class_label << ',' << r.n_frames
        << ',';
    for (size_t i = 0; i < r.feature_paths.size(); ++i) {
      if (i) out << ';';
      out << r.feature_paths[i];
    }
    out << '\n';
  }
  if (!out.flush()) throw DataError("failed writing manifest: " + path);
}

ClipFeatures load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  char magic[8];
  if (!in.read(magic, 8)) throw TruncatedError("feature file shorter than its magic: " + path);
  if (std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw BadMagicError("bad feature-file magic in " + path);
  const uint32_t m = get_u32le(in, "clip count in " + path);
  const uint32_t n = get_u32le(in, "feature dim in " + path);
  if (m == 0 || n == 0 || m > kMaxFeatureDim || n > kMaxFeatureDim ||
      static_cast<uint64_t>(m) * n > kMaxFeatureElems)
    throw DimensionError("feature dimensions out of range (" + std::to_string(m) + " x " +
                         std::to_string(n) + ") in " + path);

  const int64_t count = static_cast<int64_t>(m) * n;
  std::vector<float> raw(static_cast<size_t>(count));
  if (!in.read(reinterpret_cast<char*>(raw.data()), count * 4))
    throw TruncatedError("feature payload truncated in " + path +
                         " (expected " + std::to_string(count) + " floats)");
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("unexpected trailing bytes in feature file: " + path);

  ClipFeatures clips;
  clips.features = Tensor::zeros({static_cast<int>(m), static_cast<int>(n)});
  for (int64_t i = 0; i < count; ++i) clips.features[i] = static_cast<double>(raw[i]);
  return clips;
}

void save_features(const std::string& path, const ClipFeatures& clips) {
  if (clips.features.rank() != 2) throw ShapeError("clip features must be rank-2");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open feature file for writing: " + path);
  out.write(kFeatureMagic, 8);
  put_u32le(out, static_cast<uint32_t>(clips.clips()));
  put_u32le(out, static_cast<uint32_t>(clips.dim()));
  std::vector<float> raw(clips.features.data.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(clips.features.data[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
  if (!out.flush()) throw DataError("failed writing feature file: " + path);
}

Tensor segment_pool(const ClipFeatures& clips, int t_segments) {
  if (t_segments <= 0) throw UsageError("segment_pool requires T > 0");
  const int m = clips.clips();
  const int n = clips.dim();
  Tensor out = Tensor::zeros({t_segments, n});
  for (int t = 0; t < t_segments; ++t) {
    const int64_t begin = static_cast<int64_t>(t) * m / t_segments;
    const int64_t end = static_cast<int64_t>(t + 1) * m / t_segments;
    if (begin >= end) {
      const int64_t src = std::min<int64_t>(begin, m - 1);
      for (int j = 0; j < n; ++j) out.at(t, j) = clips.features.at(static_cast<int>(src), j);
      continue;
    }
    for (int j = 0; j < n; ++j) out.at(t, j) = clips.features.at(static_cast<int>(begin), j);
    for (int64_t r = begin + 1; r < end; ++r) {
      for (int j = 0; j < n; ++j)
        out.at(t, j) = std::max(out.at(t, j), clips.features.at(static_cast<int>(r), j));
    }
  }
  return out;
}

AnnotationSet load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty annotations file: " + path);
  if (strip(line) != "video_id,start_frame,end_frame")
    throw DataError("annotations header mismatch in " + path);

  AnnotationSet a;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto fields = split_on(strip(line), ',');
    if (fields.size() != 3)
      throw DataError("annotations line " + std::to_string(line_no) + " malformed");
    const std::string id = strip(fields[0]);
    const int64_t start = parse_int(strip(fields[1]), "start_frame");
    const int64_t end = parse_int(strip(fields[2]), "end_frame");
    if (start < 1 || end < start)
      throw DataError("annotations line " + std::to_string(line_no) +
                      ": interval must satisfy 1 <= start <= end");
    a.intervals[id].emplace_back(start, end);
  }
  // Normalize: sort and merge overlapping or adjacent intervals.
  for (auto& [id, list] : a.intervals) {
    std::sort(list.begin(), list.end());
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& iv : list) {
      if (!merged.empty() && iv.first <= merged.back().second + 1) {
        merged.back().second = std::max(merged.back().second, iv.second);
      } else {
        merged.push_back(iv);
      }
    }
    list = std::move(merged);
  }
  return a;
}

void save_annotations(const std::string& path, const AnnotationSet& a) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open annotations for writing: " + path);
  out << "video_id,start_frame,end_frame\n";
  for (const auto& [id, list] : a.intervals) {
    for (const auto& iv : list) out << id << ',' << iv.first << ',' << iv.second << '\n';
  }
  if (!out.flush()) throw DataError("failed writing annotations: " + path);
}

BatchSampler::BatchSampler(const Manifest& manifest, std::span<const int> pool, int anomaly_count,
                           int normal_count, uint64_t seed)
    : anomaly_count_(anomaly_count), normal_count_(normal_count), rng_(seed) {
  for (int idx : pool) {
    const VideoRecord& r = manifest.records[static_cast<size_t>(idx)];
    if (r.split != Split::kTrain) continue;
    (r.is_anomaly() ? anomaly_pool_ : normal_pool_).push_back(idx);
  }
  if (static_cast<int>(anomaly_pool_.size()) < anomaly_count_)
    throw DataError("training pool has " + std::to_string(anomaly_pool_.size()) +
                    " anomaly videos, need at least " + std::to_string(anomaly_count_));
  if (static_cast<int>(normal_pool_.size()) < normal_count_)
    throw DataError("training pool has " + std::to_string(normal_pool_.size()) +
                    " normal videos, need at least " + std::to_string(normal_count_));
}

BatchSampler::Batch BatchSampler::next() {
  Batch b;
  for (int i : rng_.sample_without_replacement(static_cast<int>(anomaly_pool_.size()),
                                               anomaly_count_))
    b.anomaly.push_back(anomaly_pool_[static_cast<size_t>(i)]);
  for (int i :
       rng_.sample_without_replacement(static_cast<int>(normal_pool_.size()), normal_count_))
    b.normal.push_back(normal_pool_[static_cast<size_t>(i)]);
  return b;
}

Tensor multiview_average(std::span<const Tensor> views) {
  if (views.empty()) throw UsageError("multiview_average of no views");
  const Tensor& first = views[0];
  Tensor out = first;
  for (size_t v = 1; v < views.size(); ++v) {
    if (!views[v].same_shape(first))
      throw DataError("multiview_average: view " + std::to_string(v) + " has shape " +
                      views[v].shape_str() + ", expected " + first.shape_str());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += views[v][i];
  }
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= static_cast<double>(views.size());
  return out;
}

namespace {

// Orthonormal class directions via Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> class_directions(Rng& rng, int c, int n) {
  std::vector<std::vector<double>> dirs;
  for (int k = 0; k < c; ++k) {
    std::vector<double> d(static_cast<size_t>(n));
    for (double& v : d) v = rng.normal();
    for (const auto& prev : dirs) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += d[static_cast<size_t>(i)] * prev[static_cast<size_t>(i)];
      for (int i = 0; i < n; ++i) d[static_cast<size_t>(i)] -= dot * prev[static_cast<size_t>(i)];
    }
    double norm = 0.0;
    for (double v : d) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-6) throw NumericError("degenerate class direction draw");
    for (double& v : d) v /= norm;
    dirs.push_back(std::move(d));
  }
  return dirs;
}

}  // namespace

SynthDataset synth_generate(const SynthSpec& spec, uint64_t seed, const std::string& out_dir) {
  if (spec.n < 1 || spec.t < 1 || spec.c < 1 || spec.train_per_class < 1 ||
      spec.test_per_class < 0 || spec.clips_per_video < 1 || spec.frames_per_clip < 1 ||
      spec.views < 1)
    throw UsageError("invalid synthetic dataset spec");
  if (spec.c > spec.n)
    throw UsageError("cannot plant " + std::to_string(spec.c) +
                     " orthogonal class directions in dimension " + std::to_string(spec.n));
  if (spec.anomaly_fraction <= 0.0 || spec.anomaly_fraction > 1.0)
    throw UsageError("anomaly_fraction must lie in (0, 1]");
  if (spec.sigma < 0.0 || spec.delta < 0.0) throw UsageError("delta and sigma must be nonnegative");

  fs::create_directories(fs::path(out_dir) / "features");

  Rng rng(seed);
  std::vector<double> mu0(static_cast<size_t>(spec.n));
  for (double& v : mu0) v = rng.normal();
  const auto dirs = class_directions(rng, spec.c, spec.n);

  const int m = spec.clips_per_video;
  const int window = std::max(1, static_cast<int>(std::lround(spec.anomaly_fraction * m)));
  const int64_t n_frames = static_cast<int64_t>(m) * spec.frames_per_clip;

  SynthDataset ds;
  char idbuf[64];

  auto emit_video = [&](const std::string& id, Split split, int label) {
    // Clip-level class means, then per-view independent noise.
    const int start = label > 0 ? static_cast<int>(rng.below(static_cast<uint64_t>(m - window + 1)))
                                : 0;
    VideoRecord rec;
    rec.video_id = id;
    rec.split = split;
    rec.class_label = label;
    rec.n_frames = n_frames;
    for (int view = 0; view < spec.views; ++view) {
      ClipFeatures clips;
      clips.features = Tensor::zeros({m, spec.n});
      for (int r = 0; r < m; ++r) {
        const bool planted = label > 0 && r >= start && r < start + window;
        for (int j = 0; j < spec.n; ++j) {
          double mean = mu0[static_cast<size_t>(j)];
          if (planted) mean += spec.delta * dirs[static_cast<size_t>(label - 1)][static_cast<size_t>(j)];
          clips.features.at(r, j) = mean + spec.sigma * rng.normal();
        }
      }
      std::snprintf(idbuf, sizeof idbuf, "features/%s_v%d.feat", id.c_str(), view);
      save_features((fs::path(out_dir) / idbuf).string(), clips);
      rec.feature_paths.push_back(idbuf);
    }
    if (label > 0) {
      const int64_t sf = static_cast<int64_t>(start) * spec.frames_per_clip + 1;
      const int64_t ef = static_cast<int64_t>(start + window) * spec.frames_per_clip;
      ds.annotations.intervals[id].emplace_back(sf, ef);
    }
    ds.manifest.records.push_back(std::move(rec));
  };

  auto emit_split = [&](Split split, int per_class) {
    const char* tag = split == Split::kTrain ? "train" : "test";
    for (int cls = 1; cls <= spec.c; ++cls) {
      for (int i = 0; i < per_class; ++i) {
        std::snprintf(idbuf, sizeof idbuf, "%s_c%d_%03d", tag, cls, i);
        emit_video(idbuf, split, cls);
      }
    }
    const int normals = per_class * spec.c;  // as many normals as anomalies
    for (int i = 0; i < normals; ++i) {
      std::snprintf(idbuf, sizeof idbuf, "%s_normal_%03d", tag, i);
      emit_video(idbuf, split, 0);
    }
  };
  emit_split(Split::kTrain, spec.train_per_class);
  emit_split(Split::kTest, spec.test_per_class);

  ds.manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  ds.annotations_path = (fs::path(out_dir) / "annotations.csv").string();
  ds.spec_path = (fs::path(out_dir) / "synth_spec.txt").string();
  save_manifest(ds.manifest_path, ds.manifest);
  save_annotations(ds.annotations_path, ds.annotations);

  std::ofstream spec_out(ds.spec_path, std::ios::trunc);
  spec_out << "n = " << spec.n << "\nt = " << spec.t << "\nc = " << spec.c
           << "\ntrain_per_class = " << spec.train_per_class
           << "\ntest_per_class = " << spec.test_per_class
           << "\nclips_per_video = " << spec.clips_per_video
           << "\nframes_per_clip = " << spec.frames_per_clip
           << "\nanomaly_fraction = " << spec.anomaly_fraction << "\ndelta = " << spec.delta
           << "\nsigma = " << spec.sigma << "\nviews = " << spec.views << "\nseed = " << seed
           << "\n";
  if (!spec_out.flush()) throw DataError("failed writing synth spec");
  return ds;
}

FeatureStore::FeatureStore(std::string base_dir, int t_segments)
    : base_dir_(std::move(base_dir)), t_segments_(t_segments) {}

std::string FeatureStore::resolve(const std::string& relative_path) const {
  fs::path p(relative_path);
  if (p.is_absolute() || base_dir_.empty()) return relative_path;
  return (fs::path(base_dir_) / p).string();
}

const Tensor& FeatureStore::segment_features(const VideoRecord& rec, int view) {
  if (view < 0 || view >= num_views(rec))
    throw UsageError("view " + std::to_string(view) + " out of range for " + rec.video_id);
  const std::string key = rec.feature_paths[static_cast<size_t>(view)];
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  ClipFeatures clips = load_features(resolve(key));
  return cache_.emplace(key, segment_pool(clips, t_segments_)).first->second;
}

}  // namespace milattn
