#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "milattn/graph.hpp"
#include "milattn/tensor.hpp"

namespace milattn {

// Architecture hyperparameters. Defaults follow the reference configuration
// (T=32 segments, 7168-dim features, 1024 LSTM units, 96-unit detection
// latent, 13 anomaly classes); the widths the reference leaves open get
// modest defaults and are fully configurable.
struct ModelConfig {
  int t = 32;        // temporal segments per video
  int n = 7168;      // input feature dimension
  int n_h = 1024;    // LSTM hidden units
  int d_att1 = 256;  // first-level attention latent width
  int n_det1 = 512;  // detection branch layer-1 width
  int n_l = 96;      // detection branch layer-2 width (feeds second attention)
  int d_att2 = 32;   // second-level attention latent width
  int n_cls = 256;   // classification hidden width
  int c = 13;        // anomaly classes; class 0 is Normal
  bool use_attn1 = true;
  bool use_attn2 = true;

  int skip_dim() const { return n + n_h; }
  int num_classes() const { return c + 1; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Named trainable tensors in a fixed canonical order. The order is part of
// the checkpoint format and of gradient bookkeeping; never reorder.
struct ModelParams {
  struct Entry {
    std::string name;
    Tensor value;
  };

  ModelConfig config;
  std::vector<Entry> entries;

  Tensor& tensor(const std::string& name);
  const Tensor& tensor(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 if absent
  // Group prefix before the first '.', e.g. "lstm", "attn1", "det".
  static std::string group_of(const std::string& name);
};

// Canonical parameter names and shapes for a config, in entry order.
struct ParamSpec {
  std::string name;
  std::vector<int> shape;
};
std::vector<ParamSpec> param_layout(const ModelConfig& config);

// Xavier-uniform weights, zero biases except the LSTM forget-gate bias (1).
// Bit-identical output for a given (config, seed).
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Graph leaves for every parameter, in canonical entry order.
struct ParamNodes {
  std::vector<NodeId> all;
  // LSTM gate weights/biases act on [F_t ; h_{t-1}].
  NodeId lstm_w_i, lstm_b_i, lstm_w_f, lstm_b_f, lstm_w_c, lstm_b_c, lstm_w_o, lstm_b_o;
  NodeId a1_w_l, a1_b_l, a1_w_gl, a1_b_gl;
  NodeId det_w1, det_b1, det_w2, det_b2, det_w3, det_b3;
  NodeId a2_w_l, a2_b_l, a2_w_gl, a2_b_gl;
  NodeId cls_w1, cls_b1, cls_w2, cls_b2;
};

ParamNodes bind_params(Graph& g, const ModelParams& params);

// One video's forward pass, as graph nodes. alpha/beta are kInvalidNode when
// the corresponding attention level is disabled in the config.
struct ForwardTrace {
  NodeId alpha = kInvalidNode;      // first-level weights, [T], softmax-normalized
  NodeId beta = kInvalidNode;       // second-level weights, [T], sigmoid
  NodeId scores = kInvalidNode;     // per-segment anomaly scores S, [T]
  NodeId posterior = kInvalidNode;  // class posteriors, [C+1]
  NodeId f_h = kInvalidNode;        // LSTM output with skip connection, [T x (n+n_h)]
  NodeId f_star = kInvalidNode;     // first-modulated features
  NodeId f_prime = kInvalidNode;    // detection layer-2 activations, [T x n_l]
  NodeId f_dstar = kInvalidNode;    // second-modulated features
};

// Stage C temporal encoder: standard LSTM, h_0 = c_0 = 0, returns stacked
// hidden states [T x n_h].
NodeId lstm_forward(Graph& g, NodeId features, const ParamNodes& p, const ModelConfig& cfg);

// Row-wise [h_t ; F_t] concatenation (LSTM output first).
NodeId skip_concat(Graph& g, NodeId hidden, NodeId features);

// First-level attention over the raw (l2-normalized) features -> alpha [T].
NodeId attention_first(Graph& g, NodeId features, const ParamNodes& p);

struct DetectionOut {
  NodeId scores;  // [T] sigmoid scores
  NodeId latent;  // [T x n_l] layer-2 activations (F')
};

// Time-distributed 3-layer detection perceptron.
DetectionOut detection_forward(Graph& g, NodeId f_star, const ParamNodes& p);

// Second-level attention over the detection latents -> beta [T].
NodeId attention_second(Graph& g, NodeId f_prime, const ParamNodes& p);

// Time-mean + 2-layer classification head -> posteriors [C+1].
NodeId classify_forward(Graph& g, NodeId f_dstar, const ParamNodes& p);

ForwardTrace model_forward(Graph& g, NodeId features, const ParamNodes& p,
                           const ModelConfig& cfg);

}  // namespace milattn
