#include "milattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "milattn/errors.hpp"
#include "milattn/losses.hpp"

namespace fs = std::filesystem;

namespace milattn {

namespace {

// Distinct deterministic streams per seed for parameter init and sampling.
constexpr uint64_t kSamplerSeedSalt = 0x5a4d504c52424154ull;

struct BatchForward {
  std::vector<ForwardTrace> traces;
  std::vector<int> labels;
};

BatchForward forward_batch(Graph& g, const ParamNodes& nodes, const ModelConfig& cfg,
                           const Manifest& manifest, FeatureStore& features,
                           std::span<const int> record_indices) {
  BatchForward out;
  out.traces.reserve(record_indices.size());
  out.labels.reserve(record_indices.size());
  for (int idx : record_indices) {
    const VideoRecord& rec = manifest.records[static_cast<size_t>(idx)];
    const Tensor& f = features.segment_features(rec, 0);  // training uses the first view
    if (f.cols() != cfg.n)
      throw DataError("video " + rec.video_id + " has feature dim " + std::to_string(f.cols()) +
                      ", model expects " + std::to_string(cfg.n));
    NodeId fnode = g.constant(f);
    out.traces.push_back(model_forward(g, fnode, nodes, cfg));
    out.labels.push_back(rec.class_label);
  }
  return out;
}

std::vector<Tensor> collect_grads(const Graph& g, const ParamNodes& nodes) {
  std::vector<Tensor> grads;
  grads.reserve(nodes.all.size());
  for (NodeId id : nodes.all) grads.push_back(g.grad(id));
  return grads;
}

}  // namespace

TrainStats run_training(const TrainOptions& options, std::ostream& log) {
  const RunConfig& cfg = options.config;
  cfg.validate();
  if (options.out_dir.empty()) throw UsageError("training requires an output directory");
  fs::create_directories(options.out_dir);

  Manifest manifest = load_manifest(options.manifest_path);
  manifest.validate_labels(cfg.model.c);
  AnnotationSet annotations;
  bool have_annotations = false;
  if (!options.annotations_path.empty()) {
    annotations = load_annotations(options.annotations_path);
    have_annotations = true;
  }

  // Echo the exact effective configuration; re-running this file reproduces
  // the checkpoints bit-exactly.
  const std::string config_echo = serialize_run_config(cfg);
  {
    std::ofstream cfg_out(fs::path(options.out_dir) / "run_config.txt", std::ios::trunc);
    cfg_out << config_echo;
    if (!cfg_out.flush()) throw DataError("failed writing run_config.txt");
  }
  log << "# effective configuration\n" << config_echo << "# end configuration\n";

  // Hold out a deterministic slice of the training split for cadence evals.
  std::vector<int> train_idx = manifest.indices(Split::kTrain);
  std::vector<int> pool, holdout;
  int stride = 0;
  if (cfg.eval_every > 0 && cfg.holdout_fraction > 0.0)
    stride = static_cast<int>(std::lround(1.0 / cfg.holdout_fraction));
  for (size_t i = 0; i < train_idx.size(); ++i) {
    if (stride > 0 && static_cast<int>(i % stride) == stride - 1) {
      holdout.push_back(train_idx[i]);
    } else {
      pool.push_back(train_idx[i]);
    }
  }

  ClassWeights class_weights = compute_class_weights(manifest, cfg.model.c);
  {
    log << "class frequencies:";
    for (double f : class_weights.freq) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.6f", f);
      log << buf;
    }
    log << "\n";
  }

  ModelParams params;
  Adam adam(cfg.adam, init_params(cfg.model, cfg.seed));
  if (!options.resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(options.resume_path);
    if (!(ckpt.params.config == cfg.model))
      throw DataError("resume checkpoint architecture differs from the configured model");
    params = std::move(ckpt.params);
    if (ckpt.optimizer) {
      adam.restore(ckpt.optimizer->step, std::move(ckpt.optimizer->m),
                   std::move(ckpt.optimizer->v));
      log << "resumed from " << options.resume_path << " at optimizer step "
          << ckpt.optimizer->step << "\n";
    } else {
      log << "resumed parameters from " << options.resume_path << " (no optimizer state)\n";
    }
  } else {
    params = init_params(cfg.model, cfg.seed);
  }

  FeatureStore features(options.features_dir, cfg.model.t);
  BatchSampler sampler(manifest, pool, cfg.batch_anomaly, cfg.batch_normal,
                       cfg.seed ^ kSamplerSeedSalt);

  auto snapshot = [&]() -> AdamSnapshot {
    AdamSnapshot snap;
    snap.step = adam.step_count();
    snap.config = adam.config();
    snap.m.assign(adam.first_moments().begin(), adam.first_moments().end());
    snap.v.assign(adam.second_moments().begin(), adam.second_moments().end());
    return snap;
  };
  auto write_checkpoint = [&](const std::string& name) {
    const std::string path = (fs::path(options.out_dir) / name).string();
    if (cfg.save_optimizer_state) {
      AdamSnapshot snap = snapshot();
      save_checkpoint(path, params, &snap);
    } else {
      save_checkpoint(path, params, nullptr);
    }
    return path;
  };

  TrainStats stats;
  Graph graph;
  char line[256];
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    BatchSampler::Batch batch = sampler.next();
    std::vector<int> order = batch.anomaly;
    order.insert(order.end(), batch.normal.begin(), batch.normal.end());

    graph.clear();
    ParamNodes nodes = bind_params(graph, params);
    BatchForward fwd = forward_batch(graph, nodes, cfg.model, manifest, features, order);
    TotalLossNodes losses = total_loss(graph, fwd.traces, fwd.labels, cfg.loss, class_weights);

    const double total = graph.value(losses.total)[0];
    const double loss_d = graph.value(losses.detection)[0];
    const double loss_c = graph.value(losses.classification)[0];
    const double loss_att = graph.value(losses.attention)[0];
    if (!std::isfinite(total)) {
      const std::string saved = write_checkpoint("last_good.ckpt");
      log << "iteration " << iter << ": non-finite loss; last good parameters in " << saved
          << "\n";
      throw NumericError("non-finite training loss at iteration " + std::to_string(iter));
    }

    graph.backward(losses.total);
    try {
      adam.step(params, collect_grads(graph, nodes));
    } catch (const NumericError&) {
      const std::string saved = write_checkpoint("last_good.ckpt");
      log << "iteration " << iter << ": non-finite gradient; last good parameters in " << saved
          << "\n";
      throw;
    }

    std::snprintf(line, sizeof line, "iter=%d loss_d=%.9g loss_c=%.9g loss_att=%.9g total=%.9g\n",
                  iter, loss_d, loss_c, loss_att, total);
    log << line;

    stats.iterations_run = iter;
    stats.last_total = total;
    stats.last_detection = loss_d;
    stats.last_classification = loss_c;
    stats.last_attention = loss_att;

    if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0) {
      write_checkpoint("checkpoint_" + std::to_string(iter) + ".ckpt");
    }

    if (cfg.eval_every > 0 && iter % cfg.eval_every == 0 && !holdout.empty()) {
      // Cadence evaluation on the held-out slice with a read-only snapshot.
      // The frame-level ROC needs annotations plus both polarities in the
      // slice; otherwise only classification quality is reported.
      Manifest held;
      bool annotated = have_annotations;
      bool has_anomaly = false, has_normal = false;
      for (int idx : holdout) {
        VideoRecord rec = manifest.records[static_cast<size_t>(idx)];
        rec.split = Split::kTest;
        if (rec.is_anomaly() && !annotations.has(rec.video_id)) annotated = false;
        (rec.is_anomaly() ? has_anomaly : has_normal) = true;
        held.records.push_back(std::move(rec));
      }
      annotated = annotated && has_anomaly && has_normal;
      if (annotated) {
        EvalOptions eopt;
        eopt.maa_include_normal = cfg.maa_include_normal;
        EvalReport rep = evaluate(params, held, features, annotations, eopt);
        std::snprintf(line, sizeof line, "iter=%d holdout_auc=%.6f holdout_maa=%.6f\n", iter,
                      rep.roc.auc, rep.classification.maa);
        log << line;
      } else {
        // No temporal annotations: report classification quality only.
        std::vector<Tensor> posteriors;
        std::vector<int> labels;
        for (const VideoRecord& rec : held.records) {
          Graph eg;
          ParamNodes en = bind_params(eg, params);
          ForwardTrace tr =
              model_forward(eg, eg.constant(features.segment_features(rec, 0)), en, cfg.model);
          posteriors.push_back(eg.value(tr.posterior));
          labels.push_back(rec.class_label);
        }
        ClassificationReport rep = classify_videos(posteriors, labels, cfg.model.num_classes(),
                                                   cfg.maa_include_normal);
        std::snprintf(line, sizeof line, "iter=%d holdout_maa=%.6f\n", iter, rep.maa);
        log << line;
      }
    }
  }

  stats.final_checkpoint = write_checkpoint("final.ckpt");
  log << "final checkpoint: " << stats.final_checkpoint << "\n";
  stats.params = std::move(params);
  return stats;
}

GradcheckOptions default_gradcheck_options() {
  GradcheckOptions opt;
  opt.model.t = 4;
  opt.model.n = 6;
  opt.model.n_h = 5;
  opt.model.d_att1 = 4;
  opt.model.n_det1 = 5;
  opt.model.n_l = 3;
  opt.model.d_att2 = 3;
  opt.model.n_cls = 4;
  opt.model.c = 2;
  return opt;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  const ModelConfig& cfg = options.model;
  cfg.validate();
  if (cfg.t > 4 || cfg.n > 8)
    throw UsageError("gradcheck is restricted to tiny configs (t <= 4, n <= 8)");
  if (options.videos_per_polarity < 1)
    throw UsageError("gradcheck needs at least one video per polarity");

  ModelParams params = init_params(cfg, options.seed);

  // A fixed random mini-batch: anomaly labels cycle over 1..C.
  Rng rng(options.seed ^ 0x46454154ull);
  std::vector<Tensor> batch_features;
  std::vector<int> labels;
  for (int k = 0; k < 2 * options.videos_per_polarity; ++k) {
    Tensor f = Tensor::zeros({cfg.t, cfg.n});
    for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
    batch_features.push_back(std::move(f));
    labels.push_back(k < options.videos_per_polarity ? 1 + (k % cfg.c) : 0);
  }
  LossWeights weights;  // reference defaults: all loss terms active
  ClassWeights class_weights;
  {
    std::vector<int64_t> counts(static_cast<size_t>(cfg.num_classes()), 0);
    for (int l : labels) counts[static_cast<size_t>(l)]++;
    for (int64_t c : counts)
      class_weights.freq.push_back(static_cast<double>(c) / static_cast<double>(labels.size()));
  }

  auto loss_value = [&](const ModelParams& p) {
    Graph g;
    ParamNodes nodes = bind_params(g, p);
    std::vector<ForwardTrace> traces;
    for (const Tensor& f : batch_features)
      traces.push_back(model_forward(g, g.constant(f), nodes, cfg));
    TotalLossNodes tl = total_loss(g, traces, labels, weights, class_weights);
    return g.value(tl.total)[0];
  };

  // Analytic gradients from one backward pass.
  std::vector<Tensor> analytic;
  {
    Graph g;
    if (options.corrupt_backward) g.set_test_corruption(true);
    ParamNodes nodes = bind_params(g, params);
    std::vector<ForwardTrace> traces;
    for (const Tensor& f : batch_features)
      traces.push_back(model_forward(g, g.constant(f), nodes, cfg));
    TotalLossNodes tl = total_loss(g, traces, labels, weights, class_weights);
    g.backward(tl.total);
    analytic = collect_grads(g, nodes);
  }

  GradcheckResult result;
  const double h = options.step;
  for (size_t e = 0; e < params.entries.size(); ++e) {
    Tensor& w = params.entries[e].value;
    GradcheckRow row;
    row.name = params.entries[e].name;
    row.shape = w.shape_str();
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double saved = w[j];
      w[j] = saved + h;
      const double up = loss_value(params);
      w[j] = saved - h;
      const double down = loss_value(params);
      w[j] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[e][j];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
      row.max_rel_err = std::max(row.max_rel_err, std::abs(an - fd) / denom);
    }
    row.pass = row.max_rel_err < options.tolerance;
    result.pass = result.pass && row.pass;
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace milattn
