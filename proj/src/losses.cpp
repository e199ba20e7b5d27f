#include "milattn/losses.hpp"

#include <string>

#include "milattn/errors.hpp"

namespace milattn {

namespace {
constexpr double kLogFloor = 1e-12;

NodeId sum_scalars(Graph& g, std::span<const NodeId> scalars) {
  return g.reduce_sum(g.concat_vec(scalars));
}
}  // namespace

ClassWeights compute_class_weights(const Manifest& manifest, int num_anomaly_classes) {
  manifest.validate_labels(num_anomaly_classes);
  std::vector<int64_t> counts(static_cast<size_t>(num_anomaly_classes) + 1, 0);
  int64_t total = 0;
  for (const VideoRecord& r : manifest.records) {
    if (r.split != Split::kTrain) continue;
    counts[static_cast<size_t>(r.class_label)]++;
    ++total;
  }
  if (total == 0) throw DataError("manifest has no training videos");
  ClassWeights w;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0)
      throw DataError("class " + std::to_string(i) + " has no training samples");
    w.freq.push_back(static_cast<double>(counts[i]) / static_cast<double>(total));
  }
  return w;
}

void LossWeights::validate() const {
  if (lambda_d < 0.0 || lambda_d > 1.0) throw UsageError("lambda_d must lie in [0, 1]");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda_att < 0.0)
    throw UsageError("loss weighting factors must be nonnegative");
}

NodeId mil_ranking_loss(Graph& g, std::span<const NodeId> anomaly_scores,
                        std::span<const NodeId> normal_scores, double lambda1, double lambda2,
                        bool batch_max) {
  if (anomaly_scores.empty() || normal_scores.empty())
    throw UsageError("mil_ranking_loss on an empty batch");
  if (anomaly_scores.size() != normal_scores.size())
    throw UsageError("mil_ranking_loss requires paired lists, got " +
                     std::to_string(anomaly_scores.size()) + " anomaly vs " +
                     std::to_string(normal_scores.size()) + " normal videos");

  NodeId hinge;
  if (batch_max) {
    NodeId ma = g.reduce_max(g.concat_vec(anomaly_scores));
    NodeId mn = g.reduce_max(g.concat_vec(normal_scores));
    hinge = g.relu(g.affine(g.sub(ma, mn), -1.0, 1.0));
  } else {
    std::vector<NodeId> hinges;
    hinges.reserve(anomaly_scores.size());
    for (size_t k = 0; k < anomaly_scores.size(); ++k) {
      NodeId gap = g.sub(g.reduce_max(anomaly_scores[k]), g.reduce_max(normal_scores[k]));
      hinges.push_back(g.relu(g.affine(gap, -1.0, 1.0)));
    }
    hinge = g.affine(sum_scalars(g, hinges), 1.0 / static_cast<double>(hinges.size()), 0.0);
  }

  // Smoothness within each anomaly video (no cross-video terms) and sparsity,
  // both summed over the anomaly videos.
  std::vector<NodeId> smooth_terms, sparse_terms;
  for (NodeId s : anomaly_scores) {
    const int t = static_cast<int>(g.value(s).numel());
    if (t > 1) {
      NodeId diff = g.sub(g.slice(s, 0, t - 1), g.slice(s, 1, t - 1));
      smooth_terms.push_back(g.reduce_sum(g.square(diff)));
    }
    sparse_terms.push_back(g.reduce_sum(s));
  }
  NodeId loss = hinge;
  if (!smooth_terms.empty() && lambda1 != 0.0) {
    loss = g.add(loss, g.affine(sum_scalars(g, smooth_terms), lambda1, 0.0));
  }
  if (lambda2 != 0.0) {
    loss = g.add(loss, g.affine(sum_scalars(g, sparse_terms), lambda2, 0.0));
  }
  return loss;
}

NodeId classification_loss(Graph& g, std::span<const NodeId> posteriors,
                           std::span<const int> labels, const ClassWeights& weights) {
  if (posteriors.empty()) throw UsageError("classification_loss on an empty batch");
  if (posteriors.size() != labels.size())
    throw UsageError("classification_loss: posterior/label counts differ");
  const int classes = weights.num_classes();

  std::vector<NodeId> terms;
  terms.reserve(posteriors.size());
  for (size_t v = 0; v < posteriors.size(); ++v) {
    const int label = labels[v];
    if (label < 0 || label >= classes)
      throw DataError("class label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(classes - 1) + "]");
    if (g.value(posteriors[v]).numel() != classes)
      throw ShapeError("posterior length does not match class count");
    Tensor w = Tensor::zeros({classes});
    w[label] = 1.0 - weights.freq[static_cast<size_t>(label)];
    NodeId weighted = g.mul(g.constant(std::move(w)), g.log(g.clamp_min(posteriors[v], kLogFloor)));
    terms.push_back(g.affine(g.reduce_sum(weighted), -1.0, 0.0));
  }
  return g.affine(sum_scalars(g, terms), 1.0 / static_cast<double>(terms.size()), 0.0);
}

NodeId attention_regularizer(Graph& g, NodeId alpha, NodeId beta) {
  const Tensor& av = g.value(alpha);
  const Tensor& bv = g.value(beta);
  if (av.rank() != 1 || bv.rank() != 1 || av.numel() != bv.numel())
    throw ShapeError("attention_regularizer expects alpha and beta of equal length");
  NodeId a_term = g.reduce_sum(g.square(g.affine(alpha, -1.0, 1.0)));
  NodeId b_term = g.sqrt(g.reduce_sum(g.square(beta)));
  return g.add(a_term, b_term);
}

TotalLossNodes total_loss(Graph& g, std::span<const ForwardTrace> traces,
                          std::span<const int> labels, const LossWeights& weights,
                          const ClassWeights& class_weights) {
  weights.validate();
  if (traces.size() != labels.size()) throw UsageError("total_loss: trace/label counts differ");

  std::vector<NodeId> anomaly_scores, normal_scores, posteriors;
  posteriors.reserve(traces.size());
  for (size_t v = 0; v < traces.size(); ++v) {
    if (labels[v] == 0) {
      normal_scores.push_back(traces[v].scores);
    } else {
      anomaly_scores.push_back(traces[v].scores);
    }
    posteriors.push_back(traces[v].posterior);
  }
  if (anomaly_scores.empty() || normal_scores.empty())
    throw DataError("total_loss requires both anomaly and normal videos in the batch");

  TotalLossNodes out;
  out.detection = mil_ranking_loss(g, anomaly_scores, normal_scores, weights.lambda1,
                                   weights.lambda2, weights.mil_batch_max);
  out.classification = classification_loss(g, posteriors, labels, class_weights);

  // Attention regularizer averaged over the batch; disabled attention levels
  // simply contribute nothing.
  std::vector<NodeId> att_terms;
  for (const ForwardTrace& tr : traces) {
    NodeId term = kInvalidNode;
    if (tr.alpha != kInvalidNode && tr.beta != kInvalidNode) {
      term = attention_regularizer(g, tr.alpha, tr.beta);
    } else if (tr.alpha != kInvalidNode) {
      term = g.reduce_sum(g.square(g.affine(tr.alpha, -1.0, 1.0)));
    } else if (tr.beta != kInvalidNode) {
      term = g.sqrt(g.reduce_sum(g.square(tr.beta)));
    }
    if (term != kInvalidNode) att_terms.push_back(term);
  }
  if (att_terms.empty()) {
    out.attention = g.constant(Tensor::scalar(0.0));
  } else {
    out.attention =
        g.affine(sum_scalars(g, att_terms), 1.0 / static_cast<double>(traces.size()), 0.0);
  }

  out.total = g.add(g.add(g.affine(out.detection, weights.lambda_d, 0.0),
                          g.affine(out.classification, 1.0 - weights.lambda_d, 0.0)),
                    g.affine(out.attention, weights.lambda_att, 0.0));
  return out;
}

}  // namespace milattn
