#pragma once

#include <span>
#include <vector>

#include "milattn/data.hpp"
#include "milattn/graph.hpp"
#include "milattn/model.hpp"

namespace milattn {

struct LossWeights {
  double lambda1 = 8e-5;    // temporal smoothness factor
  double lambda2 = 8e-5;    // sparsity factor
  double lambda_d = 0.9;    // detection/classification mix, in [0, 1]
  double lambda_att = 1e-6; // attention regularizer factor
  // When set, the ranking hinge uses one batch-level max per polarity
  // instead of per-pair maxes.
  bool mil_batch_max = false;

  void validate() const;
};

// Training-split class frequencies f_i, class 0 = Normal. Sums to 1.
struct ClassWeights {
  std::vector<double> freq;
  int num_classes() const { return static_cast<int>(freq.size()); }
};

// f_i = (training videos in class i) / (training videos total), classes
// 0..num_anomaly_classes. Errors if any declared class has no sample.
ClassWeights compute_class_weights(const Manifest& manifest, int num_anomaly_classes);

// MIL ranking loss over paired anomaly/normal score vectors: mean per-pair
// hinge max(0, 1 - max_t S_a + max_t S_n), plus lambda1 * within-video
// smoothness and lambda2 * sparsity summed over the anomaly videos only.
NodeId mil_ranking_loss(Graph& g, std::span<const NodeId> anomaly_scores,
                        std::span<const NodeId> normal_scores, double lambda1, double lambda2,
                        bool batch_max = false);

// Class-weighted negative log-likelihood -sum_i (1 - f_i) y_i log yhat_i,
// averaged over the batch. Posteriors are clamped at 1e-12 before the log.
NodeId classification_loss(Graph& g, std::span<const NodeId> posteriors,
                           std::span<const int> labels, const ClassWeights& weights);

// sum_j (1 - alpha_j)^2 + ||beta||_2 for one video.
NodeId attention_regularizer(Graph& g, NodeId alpha, NodeId beta);

struct TotalLossNodes {
  NodeId total = kInvalidNode;
  NodeId detection = kInvalidNode;
  NodeId classification = kInvalidNode;
  NodeId attention = kInvalidNode;
};

// lambda_d * Loss_D + (1 - lambda_d) * Loss_C + lambda_att * Loss_att over a
// batch of traces. Requires at least one anomaly (label >= 1) and one normal
// (label 0) video. The attention term averages over the batch, dropping the
// alpha/beta terms for traces whose attention level is disabled.
TotalLossNodes total_loss(Graph& g, std::span<const ForwardTrace> traces,
                          std::span<const int> labels, const LossWeights& weights,
                          const ClassWeights& class_weights);

}  // namespace milattn
