#include "milattn/model.hpp"

#include <array>
#include <cmath>

#include "milattn/errors.hpp"
#include "milattn/rng.hpp"

namespace milattn {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw UsageError(std::string("model config field ") + name + " must be positive");
  };
  positive(t, "t");
  positive(n, "n");
  positive(n_h, "n_h");
  positive(d_att1, "d_att1");
  positive(n_det1, "n_det1");
  positive(n_l, "n_l");
  positive(d_att2, "d_att2");
  positive(n_cls, "n_cls");
  positive(c, "c");
}

Tensor& ModelParams::tensor(const std::string& name) {
  int i = index_of(name);
  if (i < 0) throw UsageError("unknown parameter " + name);
  return entries[static_cast<size_t>(i)].value;
}

const Tensor& ModelParams::tensor(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) throw UsageError("unknown parameter " + name);
  return entries[static_cast<size_t>(i)].value;
}

int ModelParams::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::string ModelParams::group_of(const std::string& name) {
  auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

namespace {

Tensor xavier(Rng& rng, int fan_in, int fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int zdim = cfg.skip_dim();  // LSTM gates read [F_t ; h_{t-1}], also n + n_h
  std::vector<ParamSpec> layout;
  auto weight = [&](std::string name, int rows, int cols) {
    layout.push_back({std::move(name), {rows, cols}});
  };
  auto bias = [&](std::string name, int dim) { layout.push_back({std::move(name), {dim}}); };

  for (const char* gate : {"i", "f", "c", "o"}) {
    weight(std::string("lstm.w_") + gate, zdim, cfg.n_h);
    bias(std::string("lstm.b_") + gate, cfg.n_h);
  }
  weight("attn1.w_l", cfg.n, cfg.d_att1);
  bias("attn1.b_l", cfg.d_att1);
  weight("attn1.w_gl", cfg.d_att1, cfg.t);
  bias("attn1.b_gl", cfg.t);
  weight("det.w1", zdim, cfg.n_det1);
  bias("det.b1", cfg.n_det1);
  weight("det.w2", cfg.n_det1, cfg.n_l);
  bias("det.b2", cfg.n_l);
  weight("det.w3", cfg.n_l, 1);
  bias("det.b3", 1);
  weight("attn2.w_l", cfg.n_l, cfg.d_att2);
  bias("attn2.b_l", cfg.d_att2);
  weight("attn2.w_gl", cfg.t * cfg.d_att2, cfg.t);
  bias("attn2.b_gl", cfg.t);
  weight("cls.w1", zdim, cfg.n_cls);
  bias("cls.b1", cfg.n_cls);
  weight("cls.w2", cfg.n_cls, cfg.num_classes());
  bias("cls.b2", cfg.num_classes());
  return layout;
}

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.config = cfg;
  for (ParamSpec& spec : param_layout(cfg)) {
    Tensor t;
    if (spec.shape.size() == 2) {
      t = xavier(rng, spec.shape[0], spec.shape[1]);
    } else {
      // Biases start at zero; the LSTM forget gate opens at 1.
      t = Tensor::full(spec.shape, spec.name == "lstm.b_f" ? 1.0 : 0.0);
    }
    p.entries.push_back({std::move(spec.name), std::move(t)});
  }
  return p;
}

ParamNodes bind_params(Graph& g, const ModelParams& params) {
  ParamNodes n;
  n.all.reserve(params.entries.size());
  for (const auto& e : params.entries) n.all.push_back(g.leaf(e.value, /*trainable=*/true));

  auto id = [&](const char* name) {
    int i = params.index_of(name);
    if (i < 0) throw UsageError(std::string("parameter set is missing ") + name);
    return n.all[static_cast<size_t>(i)];
  };
  n.lstm_w_i = id("lstm.w_i");
  n.lstm_b_i = id("lstm.b_i");
  n.lstm_w_f = id("lstm.w_f");
  n.lstm_b_f = id("lstm.b_f");
  n.lstm_w_c = id("lstm.w_c");
  n.lstm_b_c = id("lstm.b_c");
  n.lstm_w_o = id("lstm.w_o");
  n.lstm_b_o = id("lstm.b_o");
  n.a1_w_l = id("attn1.w_l");
  n.a1_b_l = id("attn1.b_l");
  n.a1_w_gl = id("attn1.w_gl");
  n.a1_b_gl = id("attn1.b_gl");
  n.det_w1 = id("det.w1");
  n.det_b1 = id("det.b1");
  n.det_w2 = id("det.w2");
  n.det_b2 = id("det.b2");
  n.det_w3 = id("det.w3");
  n.det_b3 = id("det.b3");
  n.a2_w_l = id("attn2.w_l");
  n.a2_b_l = id("attn2.b_l");
  n.a2_w_gl = id("attn2.w_gl");
  n.a2_b_gl = id("attn2.b_gl");
  n.cls_w1 = id("cls.w1");
  n.cls_b1 = id("cls.b1");
  n.cls_w2 = id("cls.w2");
  n.cls_b2 = id("cls.b2");
  return n;
}

NodeId lstm_forward(Graph& g, NodeId features, const ParamNodes& p, const ModelConfig& cfg) {
  const Tensor& f = g.value(features);
  if (f.rank() != 2 || f.rows() != cfg.t || f.cols() != cfg.n) {
    throw ShapeError("lstm_forward expects [" + std::to_string(cfg.t) + " x " +
                     std::to_string(cfg.n) + "] features, got " + f.shape_str());
  }
  NodeId h_prev = g.constant(Tensor::zeros({cfg.n_h}));
  NodeId c_prev = g.constant(Tensor::zeros({cfg.n_h}));
  std::vector<NodeId> hidden;
  hidden.reserve(cfg.t);
  for (int t = 0; t < cfg.t; ++t) {
    NodeId x = g.row(features, t);
    std::array<NodeId, 2> zin{x, h_prev};
    NodeId z = g.concat_vec(zin);
    NodeId gate_i = g.sigmoid(g.add(g.matmul(z, p.lstm_w_i), p.lstm_b_i));
    NodeId gate_f = g.sigmoid(g.add(g.matmul(z, p.lstm_w_f), p.lstm_b_f));
    NodeId gate_c = g.tanh(g.add(g.matmul(z, p.lstm_w_c), p.lstm_b_c));
    NodeId gate_o = g.sigmoid(g.add(g.matmul(z, p.lstm_w_o), p.lstm_b_o));
    NodeId cell = g.add(g.mul(gate_f, c_prev), g.mul(gate_i, gate_c));
    NodeId h = g.mul(gate_o, g.tanh(cell));
    hidden.push_back(h);
    h_prev = h;
    c_prev = cell;
  }
  return g.stack_rows(hidden);
}

NodeId skip_concat(Graph& g, NodeId hidden, NodeId features) { return g.hcat(hidden, features); }

NodeId attention_first(Graph& g, NodeId features, const ParamNodes& p) {
  NodeId fhat = g.l2_normalize_rows(features);
  NodeId latent = g.add_bias(g.matmul(fhat, p.a1_w_l), p.a1_b_l);  // [T x d_att1]
  NodeId global = g.mean_rows(latent);                             // [d_att1]
  NodeId scores = g.add(g.matmul(global, p.a1_w_gl), p.a1_b_gl);   // [T]
  return g.softmax(scores);
}

DetectionOut detection_forward(Graph& g, NodeId f_star, const ParamNodes& p) {
  NodeId l1 = g.relu(g.add_bias(g.matmul(f_star, p.det_w1), p.det_b1));
  NodeId latent = g.relu(g.add_bias(g.matmul(l1, p.det_w2), p.det_b2));
  NodeId pre = g.add_bias(g.matmul(latent, p.det_w3), p.det_b3);  // [T x 1]
  NodeId scores = g.sigmoid(g.flatten(pre));
  return {scores, latent};
}

NodeId attention_second(Graph& g, NodeId f_prime, const ParamNodes& p) {
  NodeId latent = g.add_bias(g.matmul(f_prime, p.a2_w_l), p.a2_b_l);  // [T x d_att2]
  NodeId flat = g.flatten(latent);                                    // concat over time
  NodeId scores = g.add(g.matmul(flat, p.a2_w_gl), p.a2_b_gl);        // [T]
  return g.sigmoid(scores);
}

NodeId classify_forward(Graph& g, NodeId f_dstar, const ParamNodes& p) {
  NodeId pooled = g.mean_rows(f_dstar);
  NodeId h = g.relu(g.add(g.matmul(pooled, p.cls_w1), p.cls_b1));
  return g.softmax(g.add(g.matmul(h, p.cls_w2), p.cls_b2));
}

ForwardTrace model_forward(Graph& g, NodeId features, const ParamNodes& p,
                           const ModelConfig& cfg) {
  ForwardTrace trace;
  NodeId hidden = lstm_forward(g, features, p, cfg);
  trace.f_h = skip_concat(g, hidden, features);

  if (cfg.use_attn1) {
    trace.alpha = attention_first(g, features, p);
    trace.f_star = g.modulate(trace.f_h, trace.alpha);
  } else {
    trace.f_star = trace.f_h;
  }

  DetectionOut det = detection_forward(g, trace.f_star, p);
  trace.scores = det.scores;
  trace.f_prime = det.latent;

  if (cfg.use_attn2) {
    trace.beta = attention_second(g, trace.f_prime, p);
    trace.f_dstar = g.modulate(trace.f_star, trace.beta);
  } else {
    trace.f_dstar = trace.f_star;
  }

  trace.posterior = classify_forward(g, trace.f_dstar, p);
  return trace;
}

}  // namespace milattn
