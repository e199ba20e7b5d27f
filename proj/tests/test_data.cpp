#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "milattn/data.hpp"
#include "milattn/errors.hpp"
#include "support.hpp"

using namespace milattn;
using testsupport::TempDir;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ClipFeatures random_clips(int m, int n, uint64_t seed) {
  Rng rng(seed);
  ClipFeatures c;
  c.features = Tensor::zeros({m, n});
  // Values representable in f32 so the simulated extractor matches the file.
  for (double& v : c.features.data) v = static_cast<double>(static_cast<float>(rng.uniform(-2, 2)));
  return c;
}

}  // namespace

TEST_CASE("feature file round trip and typed failures") {
  TempDir tmp("feat");
  const std::string path = tmp.file("a.feat");
  ClipFeatures clips = random_clips(5, 7, 3);
  save_features(path, clips);

  SUBCASE("round trip is bit-exact in memory and on disk") {
    ClipFeatures back = load_features(path);
    CHECK(bits_equal(back.features, clips.features));
    const std::string first = read_bytes(path);
    save_features(tmp.file("b.feat"), back);
    CHECK(read_bytes(tmp.file("b.feat")) == first);
  }

  SUBCASE("corrupted magic is a BadMagicError") {
    std::string bytes = read_bytes(path);
    bytes[0] = 'X';
    write_bytes(tmp.file("bad.feat"), bytes);
    CHECK_THROWS_AS(load_features(tmp.file("bad.feat")), BadMagicError);
  }

  SUBCASE("truncated payload is a TruncatedError") {
    std::string bytes = read_bytes(path);
    bytes.resize(8 + 8 + 5 * 7 * 4 - 6);  // drop the tail of the payload
    write_bytes(tmp.file("short.feat"), bytes);
    CHECK_THROWS_AS(load_features(tmp.file("short.feat")), TruncatedError);
  }

  SUBCASE("zero or absurd dimensions are a DimensionError") {
    std::string bytes = read_bytes(path);
    bytes[8] = bytes[9] = bytes[10] = bytes[11] = 0;  // M = 0
    write_bytes(tmp.file("dim.feat"), bytes);
    CHECK_THROWS_AS(load_features(tmp.file("dim.feat")), DimensionError);
    std::string huge = read_bytes(path);
    huge[8] = huge[9] = huge[10] = huge[11] = static_cast<char>(0xff);
    write_bytes(tmp.file("huge.feat"), huge);
    CHECK_THROWS_AS(load_features(tmp.file("huge.feat")), DimensionError);
  }

  SUBCASE("trailing bytes are rejected") {
    std::string bytes = read_bytes(path) + "zz";
    write_bytes(tmp.file("trail.feat"), bytes);
    CHECK_THROWS_AS(load_features(tmp.file("trail.feat")), DataError);
  }
}

TEST_CASE("segment pooling index law") {
  SUBCASE("M == T is the identity") {
    ClipFeatures c = random_clips(8, 3, 11);
    Tensor out = segment_pool(c, 8);
    CHECK(bits_equal(out, c.features));
  }

  SUBCASE("constant rows stay constant") {
    ClipFeatures c;
    c.features = Tensor::full({16, 4}, 2.5);
    Tensor out = segment_pool(c, 8);
    for (double v : out.data) CHECK(v == 2.5);
  }

  SUBCASE("hand-worked M=3, T=2: windows [0,1) and [1,3)") {
    ClipFeatures c;
    c.features = Tensor::mat(3, 2, {1, 10, 5, 2, 3, 7});
    Tensor out = segment_pool(c, 2);
    CHECK(out.at(0, 0) == 1);
    CHECK(out.at(0, 1) == 10);
    CHECK(out.at(1, 0) == 5);  // max(5, 3)
    CHECK(out.at(1, 1) == 7);  // max(2, 7)
  }

  SUBCASE("M < T duplicates the nearest clip") {
    ClipFeatures c;
    c.features = Tensor::mat(2, 1, {1.0, 2.0});
    Tensor out = segment_pool(c, 4);
    // Windows: t=0 [0,0) empty -> row 0; t=1 [0,1); t=2 [1,1) empty -> row 1; t=3 [1,2).
    CHECK(out.data == std::vector<double>{1, 1, 2, 2});
  }

  SUBCASE("windows form a non-overlapping exhaustive cover (brute force)") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
      const int m = 1 + static_cast<int>(rng.below(64));
      const int t = 1 + static_cast<int>(rng.below(64));
      ClipFeatures c = random_clips(m, 2, 1000 + trial);
      Tensor out = segment_pool(c, t);
      if (m >= t) {
        // Brute force: every clip row contributes to exactly one segment.
        std::vector<int> owner(m, -1);
        for (int seg = 0; seg < t; ++seg) {
          for (int r = seg * m / t; r < (seg + 1) * m / t; ++r) {
            CHECK(owner[r] == -1);
            owner[r] = seg;
          }
        }
        for (int r = 0; r < m; ++r) CHECK(owner[r] != -1);
        for (int seg = 0; seg < t; ++seg) {
          for (int j = 0; j < 2; ++j) {
            double mx = -1e300;
            for (int r = 0; r < m; ++r)
              if (owner[r] == seg) mx = std::max(mx, c.features.at(r, j));
            CHECK(out.at(seg, j) == mx);
          }
        }
      }
      CHECK(out.rows() == t);
    }
  }

  CHECK_THROWS_AS(segment_pool(random_clips(3, 2, 1), 0), UsageError);
}

TEST_CASE("manifest parsing and validation") {
  TempDir tmp("manifest");
  const std::string path = tmp.file("m.csv");

  SUBCASE("round trip") {
    Manifest m;
    VideoRecord r;
    r.video_id = "v1";
    r.split = Split::kTrain;
    r.class_label = 2;
    r.n_frames = 640;
    r.feature_paths = {"features/v1_v0.feat", "features/v1_v1.feat"};
    m.records.push_back(r);
    save_manifest(path, m);
    Manifest back = load_manifest(path);
    REQUIRE(back.records.size() == 1);
    CHECK(back.records[0].video_id == "v1");
    CHECK(back.records[0].class_label == 2);
    CHECK(back.records[0].n_frames == 640);
    CHECK(back.records[0].feature_paths.size() == 2);
  }

  SUBCASE("duplicate ids rejected") {
    std::ofstream out(path);
    out << "video_id,split,class_label,n_frames,feature_paths\n";
    out << "a,train,0,10,a.feat\n";
    out << "a,train,1,10,b.feat\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(path), DataError);
  }

  SUBCASE("negative labels and bad splits rejected") {
    std::ofstream out(path);
    out << "video_id,split,class_label,n_frames,feature_paths\n";
    out << "a,train,-1,10,a.feat\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(path), DataError);

    std::ofstream out2(path, std::ios::trunc);
    out2 << "video_id,split,class_label,n_frames,feature_paths\n";
    out2 << "a,validation,0,10,a.feat\n";
    out2.close();
    CHECK_THROWS_AS(load_manifest(path), DataError);
  }

  SUBCASE("labels above the class count rejected by validate_labels") {
    std::ofstream out(path);
    out << "video_id,split,class_label,n_frames,feature_paths\n";
    out << "a,train,5,10,a.feat\n";
    out.close();
    Manifest m = load_manifest(path);
    CHECK_THROWS_AS(m.validate_labels(3), DataError);
    m.validate_labels(5);
  }
}

TEST_CASE("annotations load, merge and validate") {
  TempDir tmp("ann");
  const std::string path = tmp.file("a.csv");
  {
    std::ofstream out(path);
    out << "video_id,start_frame,end_frame\n";
    out << "v1,10,20\n";
    out << "v1,15,30\n";  // overlaps the first: merged
    out << "v1,50,60\n";
    out << "v2,1,5\n";
  }
  AnnotationSet a = load_annotations(path);
  REQUIRE(a.intervals.at("v1").size() == 2);
  CHECK(a.intervals.at("v1")[0] == std::pair<int64_t, int64_t>{10, 30});
  CHECK(a.intervals.at("v1")[1] == std::pair<int64_t, int64_t>{50, 60});
  CHECK(a.has("v2"));
  CHECK_FALSE(a.has("v3"));

  {
    std::ofstream out(path, std::ios::trunc);
    out << "video_id,start_frame,end_frame\n";
    out << "v1,20,10\n";  // end before start
  }
  CHECK_THROWS_AS(load_annotations(path), DataError);
}

TEST_CASE("batch sampler draws exact counts, deterministically, uniformly") {
  Manifest m;
  for (int i = 0; i < 60; ++i) {
    VideoRecord r;
    r.video_id = "a" + std::to_string(i);
    r.split = Split::kTrain;
    r.class_label = 1 + i % 3;
    r.n_frames = 10;
    r.feature_paths = {"x"};
    m.records.push_back(r);
  }
  for (int i = 0; i < 60; ++i) {
    VideoRecord r;
    r.video_id = "n" + std::to_string(i);
    r.split = Split::kTrain;
    r.class_label = 0;
    r.n_frames = 10;
    r.feature_paths = {"x"};
    m.records.push_back(r);
  }
  std::vector<int> pool(m.records.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);

  SUBCASE("exact counts and no duplicates") {
    BatchSampler s(m, pool, 30, 30, 1);
    for (int trial = 0; trial < 10; ++trial) {
      auto b = s.next();
      CHECK(b.anomaly.size() == 30);
      CHECK(b.normal.size() == 30);
      std::vector<int> all = b.anomaly;
      all.insert(all.end(), b.normal.begin(), b.normal.end());
      std::sort(all.begin(), all.end());
      CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
      for (int idx : b.anomaly) CHECK(m.records[static_cast<size_t>(idx)].is_anomaly());
      for (int idx : b.normal) CHECK_FALSE(m.records[static_cast<size_t>(idx)].is_anomaly());
    }
  }

  SUBCASE("seeded determinism") {
    BatchSampler s1(m, pool, 30, 30, 7);
    BatchSampler s2(m, pool, 30, 30, 7);
    for (int trial = 0; trial < 5; ++trial) {
      auto b1 = s1.next();
      auto b2 = s2.next();
      CHECK(b1.anomaly == b2.anomaly);
      CHECK(b1.normal == b2.normal);
    }
  }

  SUBCASE("selection frequencies are uniform within 3 sigma") {
    BatchSampler s(m, pool, 30, 30, 123);
    std::map<int, int> counts;
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
      auto b = s.next();
      for (int idx : b.anomaly) counts[idx]++;
      for (int idx : b.normal) counts[idx]++;
    }
    // Each video: Binomial(10000, 0.5).
    const double mean = trials * 0.5;
    const double sigma = std::sqrt(trials * 0.25);
    for (const auto& [idx, count] : counts) {
      INFO("video index ", idx, " count ", count);
      CHECK(std::abs(count - mean) <= 3.0 * sigma);
    }
    CHECK(counts.size() == 120);
  }

  SUBCASE("insufficient pools rejected") {
    std::vector<int> small(pool.begin(), pool.begin() + 40);
    CHECK_THROWS_AS(BatchSampler(m, small, 30, 30, 1), DataError);
  }
}

TEST_CASE("multiview averaging") {
  Tensor a = Tensor::vec({0.2, 0.6});
  Tensor b = Tensor::vec({0.4, 0.2});

  std::vector<Tensor> one{a};
  CHECK(bits_equal(multiview_average(one), a));

  std::vector<Tensor> two{a, b};
  Tensor avg = multiview_average(two);
  CHECK(avg[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(avg[1] == doctest::Approx(0.4).epsilon(1e-12));

  std::vector<Tensor> swapped{b, a};
  CHECK(bits_equal(multiview_average(swapped), avg));

  std::vector<Tensor> bad{a, Tensor::vec({1.0})};
  CHECK_THROWS_AS(multiview_average(bad), DataError);
}

TEST_CASE("synthetic generator: determinism, annotations, learnability") {
  TempDir tmp("synth");
  SynthSpec spec;
  spec.n = 16;
  spec.t = 8;
  spec.c = 2;
  spec.train_per_class = 6;
  spec.test_per_class = 4;
  spec.clips_per_video = 16;
  spec.frames_per_clip = 4;
  spec.anomaly_fraction = 0.25;
  spec.delta = 1.0;
  spec.sigma = 0.25;  // delta/sigma = 4

  SynthDataset ds = synth_generate(spec, 77, tmp.path() + "/d1");
  const int expected_videos = 2 * (spec.c * spec.train_per_class) + 2 * (spec.c * spec.test_per_class);
  CHECK(static_cast<int>(ds.manifest.records.size()) == expected_videos);

  SUBCASE("normal videos carry no annotation, anomalies exactly one interval") {
    for (const VideoRecord& r : ds.manifest.records) {
      if (r.is_anomaly()) {
        REQUIRE(ds.annotations.has(r.video_id));
        const auto& iv = ds.annotations.intervals.at(r.video_id);
        REQUIRE(iv.size() == 1);
        // Planted run length matches the spec within one clip.
        const int64_t frames = iv[0].second - iv[0].first + 1;
        const int64_t want =
            static_cast<int64_t>(std::lround(spec.anomaly_fraction * spec.clips_per_video)) *
            spec.frames_per_clip;
        CHECK(std::abs(frames - want) <= spec.frames_per_clip);
        CHECK(iv[0].first >= 1);
        CHECK(iv[0].second <= r.n_frames);
      } else {
        CHECK_FALSE(ds.annotations.has(r.video_id));
      }
    }
  }

  SUBCASE("same seed reproduces identical files, different seed differs") {
    SynthDataset ds2 = synth_generate(spec, 77, tmp.path() + "/d2");
    SynthDataset ds3 = synth_generate(spec, 78, tmp.path() + "/d3");
    const std::string rel = ds.manifest.records[0].feature_paths[0];
    CHECK(read_bytes(tmp.path() + "/d1/" + rel) == read_bytes(tmp.path() + "/d2/" + rel));
    CHECK(read_bytes(tmp.path() + "/d1/" + rel) != read_bytes(tmp.path() + "/d3/" + rel));
  }

  SUBCASE("nearest-class-direction oracle classifies the dataset") {
    // Construction-aware oracle: recover the background mean and class
    // directions from the training split, then classify test videos by the
    // best windowed mean projection. The dataset must be learnable before
    // the model is blamed.
    const int n = spec.n;
    std::vector<double> mu(static_cast<size_t>(n), 0.0);
    int64_t mu_count = 0;
    FeatureStore store(tmp.path() + "/d1", spec.t);
    std::map<int, std::vector<double>> class_sum;
    for (const VideoRecord& r : ds.manifest.records) {
      if (r.split != Split::kTrain) continue;
      ClipFeatures clips = load_features(store.resolve(r.feature_paths[0]));
      if (!r.is_anomaly()) {
        for (int i = 0; i < clips.clips(); ++i)
          for (int j = 0; j < n; ++j) mu[static_cast<size_t>(j)] += clips.features.at(i, j);
        mu_count += clips.clips();
      }
    }
    for (double& v : mu) v /= static_cast<double>(mu_count);
    // Class directions from annotated training windows.
    for (const VideoRecord& r : ds.manifest.records) {
      if (r.split != Split::kTrain || !r.is_anomaly()) continue;
      ClipFeatures clips = load_features(store.resolve(r.feature_paths[0]));
      const auto& iv = ds.annotations.intervals.at(r.video_id)[0];
      auto& acc = class_sum[r.class_label];
      acc.resize(static_cast<size_t>(n), 0.0);
      const int c0 = static_cast<int>((iv.first - 1) / spec.frames_per_clip);
      const int c1 = static_cast<int>((iv.second - 1) / spec.frames_per_clip);
      for (int i = c0; i <= c1; ++i)
        for (int j = 0; j < n; ++j)
          acc[static_cast<size_t>(j)] += clips.features.at(i, j) - mu[static_cast<size_t>(j)];
    }
    std::map<int, std::vector<double>> dirs;
    for (auto& [cls, acc] : class_sum) {
      double norm = 0.0;
      for (double v : acc) norm += v * v;
      norm = std::sqrt(norm);
      auto& d = dirs[cls];
      d.resize(acc.size());
      for (size_t j = 0; j < acc.size(); ++j) d[j] = acc[j] / norm;
    }

    const int window = std::max(
        1, static_cast<int>(std::lround(spec.anomaly_fraction * spec.clips_per_video)));
    int correct = 0, total = 0;
    for (const VideoRecord& r : ds.manifest.records) {
      if (r.split != Split::kTest) continue;
      ClipFeatures clips = load_features(store.resolve(r.feature_paths[0]));
      double best = -1e300;
      int best_cls = 0;
      for (const auto& [cls, d] : dirs) {
        for (int s = 0; s + window <= clips.clips(); ++s) {
          double proj = 0.0;
          for (int i = s; i < s + window; ++i)
            for (int j = 0; j < n; ++j)
              proj += (clips.features.at(i, j) - mu[static_cast<size_t>(j)]) *
                      d[static_cast<size_t>(j)];
          proj /= window;
          if (proj > best) {
            best = proj;
            best_cls = cls;
          }
        }
      }
      const int pred = best >= spec.delta / 2 ? best_cls : 0;
      correct += pred == r.class_label ? 1 : 0;
      ++total;
    }
    INFO("oracle accuracy ", static_cast<double>(correct) / total);
    CHECK(static_cast<double>(correct) / total >= 0.95);
  }

  SUBCASE("too many classes for the dimension is an error") {
    SynthSpec bad = spec;
    bad.c = 32;
    bad.n = 4;
    CHECK_THROWS_AS(synth_generate(bad, 1, tmp.path() + "/bad"), UsageError);
  }
}

TEST_CASE("feature store resolves, pools and caches") {
  TempDir tmp("store");
  ClipFeatures clips = random_clips(6, 3, 21);
  save_features(tmp.file("v.feat"), clips);

  VideoRecord rec;
  rec.video_id = "v";
  rec.feature_paths = {"v.feat"};
  rec.n_frames = 6;

  FeatureStore store(tmp.path(), 3);
  const Tensor& pooled = store.segment_features(rec, 0);
  CHECK(pooled.rows() == 3);
  CHECK(pooled.cols() == 3);
  CHECK(bits_equal(pooled, segment_pool(clips, 3)));
  // Second call returns the cached tensor (same address).
  CHECK(&store.segment_features(rec, 0) == &pooled);
  CHECK_THROWS_AS(store.segment_features(rec, 1), UsageError);
}
