#include "milattn/graph.hpp"

#include <cmath>
#include <string>

#include "milattn/errors.hpp"
#include "milattn/kernels.hpp"

namespace milattn {

namespace {
constexpr double kL2Epsilon = 1e-8;
constexpr double kSqrtGuard = 1e-12;
}  // namespace

NodeId Graph::push(Node n) {
  if (check_finite_ && !n.value.all_finite()) {
    throw NumericError("non-finite value produced by graph node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || id >= size()) throw UsageError("invalid node id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

const Tensor& Graph::grad(NodeId id) const { return node(id).grad; }

void Graph::clear() { nodes_.clear(); }

NodeId Graph::leaf(Tensor value, bool trainable) {
  value.validate();
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.trainable = trainable;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() < 1 || av.rank() > 2 || bv.rank() < 1 || bv.rank() > 2 ||
      (av.rank() == 1 && bv.rank() == 1))
    throw ShapeError("matmul expects matrix/vector operands, got " + av.shape_str() + " and " +
                     bv.shape_str());
  const int p = av.rank() == 2 ? av.shape[0] : 1;
  const int q = av.rank() == 2 ? av.shape[1] : av.shape[0];
  const int qb = bv.rank() == 2 ? bv.shape[0] : bv.shape[0];
  const int r = bv.rank() == 2 ? bv.shape[1] : 1;
  if (!(q == qb))
    throw ShapeError("matmul inner dimensions disagree: " + av.shape_str() + " vs " + bv.shape_str());

  Node n;
  n.op = Op::kMatMul;
  n.in0 = a;
  n.in1 = b;
  if (av.rank() == 2 && bv.rank() == 2) {
    n.value = Tensor::zeros({p, r});
  } else if (av.rank() == 1) {
    n.value = Tensor::zeros({r});
  } else {
    n.value = Tensor::zeros({p});
  }
  kernels::matmul(av.data.data(), bv.data.data(), n.value.data.data(), p, q, r);
  n.i0 = p;
  n.i1 = q;  // r recoverable from sizes
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!(av.same_shape(bv)))
    throw ShapeError("add shapes differ: " + av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor::zeros(av.shape);
  kernels::add(av.data.data(), bv.data.data(), n.value.data.data(), av.numel());
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!(av.same_shape(bv)))
    throw ShapeError("sub shapes differ: " + av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kSub;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor::zeros(av.shape);
  kernels::sub(av.data.data(), bv.data.data(), n.value.data.data(), av.numel());
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!(av.same_shape(bv)))
    throw ShapeError("mul shapes differ: " + av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::kMul;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor::zeros(av.shape);
  kernels::mul(av.data.data(), bv.data.data(), n.value.data.data(), av.numel());
  return push(std::move(n));
}

NodeId Graph::add_bias(NodeId m, NodeId bias) {
  const Tensor& mv = value(m);
  const Tensor& bv = value(bias);
  if (!(mv.rank() == 2 && bv.rank() == 1 && bv.shape[0] == mv.cols()))
    throw ShapeError("add_bias expects [T x d] + [d], got " + mv.shape_str() + " and " + bv.shape_str());
  Node n;
  n.op = Op::kAddBias;
  n.in0 = m;
  n.in1 = bias;
  n.value = mv;
  const int t = mv.rows(), d = mv.cols();
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) n.value.at(i, j) += bv[j];
  return push(std::move(n));
}

NodeId Graph::modulate(NodeId m, NodeId w) {
  const Tensor& mv = value(m);
  const Tensor& wv = value(w);
  if (!(mv.rank() == 2 && wv.rank() == 1 && wv.shape[0] == mv.rows()))
    throw ShapeError("modulate expects [T x d] with weights [T], got " + mv.shape_str() + " and " +
              wv.shape_str());
  Node n;
  n.op = Op::kModulate;
  n.in0 = m;
  n.in1 = w;
  n.value = mv;
  const int t = mv.rows(), d = mv.cols();
  for (int i = 0; i < t; ++i) {
    const double s = 1.0 + wv[i];
    for (int j = 0; j < d; ++j) n.value.at(i, j) *= s;
  }
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kSigmoid;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kTanh;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = std::tanh(xv[i]);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kRelu;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId x) {
  const Tensor& xv = value(x);
  if (!(xv.rank() == 1))
    throw ShapeError("softmax expects a rank-1 tensor, got " + xv.shape_str());
  Node n;
  n.op = Op::kSoftmax;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  double m = xv[0];
  for (int64_t i = 1; i < xv.numel(); ++i) m = std::max(m, xv[i]);
  double z = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) {
    n.value[i] = std::exp(xv[i] - m);
    z += n.value[i];
  }
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] /= z;
  return push(std::move(n));
}

NodeId Graph::l2_normalize_rows(NodeId x) {
  const Tensor& xv = value(x);
  if (!(xv.rank() == 2))
    throw ShapeError("l2_normalize_rows expects a rank-2 tensor, got " + xv.shape_str());
  Node n;
  n.op = Op::kL2NormalizeRows;
  n.in0 = x;
  n.value = xv;
  const int t = xv.rows(), d = xv.cols();
  n.aux.resize(t);  // effective divisor per row
  for (int i = 0; i < t; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += xv.at(i, j) * xv.at(i, j);
    const double norm = std::sqrt(s);
    const double div = norm > kL2Epsilon ? norm : kL2Epsilon;
    n.aux[i] = norm > kL2Epsilon ? div : -div;  // sign marks the clamped branch
    for (int j = 0; j < d; ++j) n.value.at(i, j) /= div;
  }
  return push(std::move(n));
}

NodeId Graph::square(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kSquare;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = xv[i] * xv[i];
  return push(std::move(n));
}

NodeId Graph::sqrt(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kSqrt;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = std::sqrt(xv[i]);
  return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kLog;
  n.in0 = x;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = std::log(xv[i]);
  return push(std::move(n));
}

NodeId Graph::clamp_min(NodeId x, double floor) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kClampMin;
  n.in0 = x;
  n.c0 = floor;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = xv[i] > floor ? xv[i] : floor;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, double a, double b) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kAffine;
  n.in0 = x;
  n.c0 = a;
  n.c1 = b;
  n.value = Tensor::zeros(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) n.value[i] = a * xv[i] + b;
  return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kReduceSum;
  n.in0 = x;
  double s = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Graph::reduce_mean(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kReduceMean;
  n.in0 = x;
  double s = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
  n.value = Tensor::scalar(s / static_cast<double>(xv.numel()));
  return push(std::move(n));
}

NodeId Graph::reduce_max(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kReduceMax;
  n.in0 = x;
  int64_t arg = 0;
  double m = xv[0];
  for (int64_t i = 1; i < xv.numel(); ++i) {
    if (xv[i] > m) {  // strict: ties resolve to the first maximal index
      m = xv[i];
      arg = i;
    }
  }
  n.value = Tensor::scalar(m);
  n.i0 = static_cast<int>(arg);
  return push(std::move(n));
}

NodeId Graph::mean_rows(NodeId x) {
  const Tensor& xv = value(x);
  if (!(xv.rank() == 2))
    throw ShapeError("mean_rows expects a rank-2 tensor, got " + xv.shape_str());
  const int t = xv.rows(), d = xv.cols();
  Node n;
  n.op = Op::kMeanRows;
  n.in0 = x;
  n.value = Tensor::zeros({d});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) n.value[j] += xv.at(i, j);
  for (int j = 0; j < d; ++j) n.value[j] /= static_cast<double>(t);
  return push(std::move(n));
}

NodeId Graph::concat_vec(std::span<const NodeId> parts) {
  if (!(!parts.empty()))
    throw ShapeError("concat_vec of empty list");
  int64_t total = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    if (!(v.rank() == 1))
    throw ShapeError("concat_vec expects rank-1 parts, got " + v.shape_str());
    total += v.numel();
  }
  Node n;
  n.op = Op::kConcatVec;
  n.in_list.assign(parts.begin(), parts.end());
  n.value = Tensor::zeros({static_cast<int>(total)});
  int64_t off = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    for (int64_t i = 0; i < v.numel(); ++i) n.value[off + i] = v[i];
    off += v.numel();
  }
  return push(std::move(n));
}

NodeId Graph::stack_rows(std::span<const NodeId> rows) {
  if (!(!rows.empty()))
    throw ShapeError("stack_rows of empty list");
  const int d = static_cast<int>(value(rows[0]).numel());
  for (NodeId r : rows) {
    const Tensor& v = value(r);
    if (!(v.rank() == 1 && v.numel() == d))
    throw ShapeError("stack_rows expects equal-length rank-1 rows");
  }
  Node n;
  n.op = Op::kStackRows;
  n.in_list.assign(rows.begin(), rows.end());
  n.value = Tensor::zeros({static_cast<int>(rows.size()), d});
  for (size_t t = 0; t < rows.size(); ++t) {
    const Tensor& v = value(rows[t]);
    for (int j = 0; j < d; ++j) n.value.at(static_cast<int>(t), j) = v[j];
  }
  return push(std::move(n));
}

NodeId Graph::hcat(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!(av.rank() == 2 && bv.rank() == 2 && av.rows() == bv.rows()))
    throw ShapeError("hcat expects rank-2 tensors with equal row counts, got " + av.shape_str() + " and " +
              bv.shape_str());
  const int t = av.rows(), p = av.cols(), q = bv.cols();
  Node n;
  n.op = Op::kHCat;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor::zeros({t, p + q});
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < p; ++j) n.value.at(i, j) = av.at(i, j);
    for (int j = 0; j < q; ++j) n.value.at(i, p + j) = bv.at(i, j);
  }
  return push(std::move(n));
}

NodeId Graph::row(NodeId m, int t) {
  const Tensor& mv = value(m);
  if (!(mv.rank() == 2 && t >= 0 && t < mv.rows()))
    throw ShapeError("row " + std::to_string(t) + " out of range for " + mv.shape_str());
  const int d = mv.cols();
  Node n;
  n.op = Op::kRow;
  n.in0 = m;
  n.i0 = t;
  n.value = Tensor::zeros({d});
  for (int j = 0; j < d; ++j) n.value[j] = mv.at(t, j);
  return push(std::move(n));
}

NodeId Graph::slice(NodeId v, int begin, int len) {
  const Tensor& vv = value(v);
  if (!(vv.rank() == 1 && begin >= 0 && len >= 1 && begin + len <= vv.shape[0]))
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
              ") out of range for " + vv.shape_str());
  Node n;
  n.op = Op::kSlice;
  n.in0 = v;
  n.i0 = begin;
  n.i1 = len;
  n.value = Tensor::zeros({len});
  for (int i = 0; i < len; ++i) n.value[i] = vv[begin + i];
  return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::kFlatten;
  n.in0 = x;
  n.value = xv;
  n.value.shape = {static_cast<int>(xv.numel())};
  return push(std::move(n));
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Graph::backward(NodeId loss) {
  const Node& ln = node(loss);
  if (ln.value.numel() != 1) {
    throw UsageError("backward requires a scalar loss node, got shape " + ln.value.shape_str());
  }

  for (Node& n : nodes_) n.grad = Tensor();

  // Mark nodes the loss depends on; only those participate in the sweep.
  std::vector<uint8_t> needed(nodes_.size(), 0);
  std::vector<NodeId> stack{loss};
  needed[static_cast<size_t>(loss)] = 1;
  while (!stack.empty()) {
    const Node& n = nodes_[static_cast<size_t>(stack.back())];
    stack.pop_back();
    auto visit = [&](NodeId in) {
      if (in != kInvalidNode && !needed[static_cast<size_t>(in)]) {
        needed[static_cast<size_t>(in)] = 1;
        stack.push_back(in);
      }
    };
    visit(n.in0);
    visit(n.in1);
    for (NodeId in : n.in_list) visit(in);
  }

  grad_buffer(loss)[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    if (!needed[static_cast<size_t>(id)]) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == Op::kLeaf || n.grad.empty()) continue;
    backward_step(n);
  }

  // Unreachable trainable leaves still report an explicit zero gradient.
  for (Node& n : nodes_) {
    if (n.trainable && n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
  }

  if (corrupt_backward_) {
    for (Node& n : nodes_) {
      if (n.trainable) {
        for (double& g : n.grad.data) g *= 1.01;
        break;
      }
    }
  }
}

void Graph::backward_step(const Node& n) {
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::kMatMul: {
      const Tensor& av = nodes_[n.in0].value;
      const Tensor& bv = nodes_[n.in1].value;
      const int p = n.i0, q = n.i1;
      const int r = static_cast<int>(bv.numel() / q);
      kernels::matmul_acc_grad_a(grad_buffer(n.in0).data.data(), g.data.data(), bv.data.data(), p,
                                 q, r);
      kernels::matmul_acc_grad_b(grad_buffer(n.in1).data.data(), av.data.data(), g.data.data(), p,
                                 q, r);
      break;
    }
    case Op::kAdd: {
      Tensor& da = grad_buffer(n.in0);
      Tensor& db = grad_buffer(n.in1);
      for (int64_t i = 0; i < g.numel(); ++i) {
        da[i] += g[i];
        db[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Tensor& da = grad_buffer(n.in0);
      Tensor& db = grad_buffer(n.in1);
      for (int64_t i = 0; i < g.numel(); ++i) {
        da[i] += g[i];
        db[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const Tensor& av = nodes_[n.in0].value;
      const Tensor& bv = nodes_[n.in1].value;
      Tensor& da = grad_buffer(n.in0);
      Tensor& db = grad_buffer(n.in1);
      for (int64_t i = 0; i < g.numel(); ++i) {
        da[i] += g[i] * bv[i];
        db[i] += g[i] * av[i];
      }
      break;
    }
    case Op::kAddBias: {
      const int t = n.value.rows(), d = n.value.cols();
      Tensor& dm = grad_buffer(n.in0);
      Tensor& dbias = grad_buffer(n.in1);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) {
          dm.at(i, j) += g.at(i, j);
          dbias[j] += g.at(i, j);
        }
      break;
    }
    case Op::kModulate: {
      const Tensor& mv = nodes_[n.in0].value;
      const Tensor& wv = nodes_[n.in1].value;
      const int t = mv.rows(), d = mv.cols();
      Tensor& dm = grad_buffer(n.in0);
      Tensor& dw = grad_buffer(n.in1);
      for (int i = 0; i < t; ++i) {
        const double s = 1.0 + wv[i];
        double dot = 0.0;
        for (int j = 0; j < d; ++j) {
          dm.at(i, j) += s * g.at(i, j);
          dot += mv.at(i, j) * g.at(i, j);
        }
        dw[i] += dot;
      }
      break;
    }
    case Op::kSigmoid: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) {
        const double y = n.value[i];
        dx[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case Op::kTanh: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) {
        const double y = n.value[i];
        dx[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::kRelu: {
      const Tensor& xv = nodes_[n.in0].value;
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) {
        if (xv[i] > 0.0) dx[i] += g[i];
      }
      break;
    }
    case Op::kSoftmax: {
      Tensor& dx = grad_buffer(n.in0);
      double dot = 0.0;
      for (int64_t i = 0; i < g.numel(); ++i) dot += g[i] * n.value[i];
      for (int64_t i = 0; i < g.numel(); ++i) dx[i] += n.value[i] * (g[i] - dot);
      break;
    }
    case Op::kL2NormalizeRows: {
      const int t = n.value.rows(), d = n.value.cols();
      Tensor& dx = grad_buffer(n.in0);
      for (int i = 0; i < t; ++i) {
        const double marked = n.aux[static_cast<size_t>(i)];
        const double div = std::abs(marked);
        if (marked > 0.0) {
          double dot = 0.0;
          for (int j = 0; j < d; ++j) dot += n.value.at(i, j) * g.at(i, j);
          for (int j = 0; j < d; ++j) dx.at(i, j) += (g.at(i, j) - n.value.at(i, j) * dot) / div;
        } else {
          // Clamped branch: the divisor is the constant epsilon.
          for (int j = 0; j < d; ++j) dx.at(i, j) += g.at(i, j) / div;
        }
      }
      break;
    }
    case Op::kSquare: {
      const Tensor& xv = nodes_[n.in0].value;
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) dx[i] += 2.0 * xv[i] * g[i];
      break;
    }
    case Op::kSqrt: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) {
        const double y = n.value[i] > kSqrtGuard ? n.value[i] : kSqrtGuard;
        dx[i] += g[i] * 0.5 / y;
      }
      break;
    }
    case Op::kLog: {
      const Tensor& xv = nodes_[n.in0].value;
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i] / xv[i];
      break;
    }
    case Op::kClampMin: {
      const Tensor& xv = nodes_[n.in0].value;
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) {
        if (xv[i] > n.c0) dx[i] += g[i];
      }
      break;
    }
    case Op::kAffine: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) dx[i] += n.c0 * g[i];
      break;
    }
    case Op::kReduceSum: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += g[0];
      break;
    }
    case Op::kReduceMean: {
      Tensor& dx = grad_buffer(n.in0);
      const double scale = g[0] / static_cast<double>(dx.numel());
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += scale;
      break;
    }
    case Op::kReduceMax: {
      grad_buffer(n.in0)[n.i0] += g[0];
      break;
    }
    case Op::kMeanRows: {
      const Tensor& xv = nodes_[n.in0].value;
      const int t = xv.rows(), d = xv.cols();
      Tensor& dx = grad_buffer(n.in0);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) dx.at(i, j) += g[j] / static_cast<double>(t);
      break;
    }
    case Op::kConcatVec: {
      int64_t off = 0;
      for (NodeId in : n.in_list) {
        Tensor& dx = grad_buffer(in);
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += g[off + i];
        off += dx.numel();
      }
      break;
    }
    case Op::kStackRows: {
      const int d = n.value.cols();
      for (size_t t = 0; t < n.in_list.size(); ++t) {
        Tensor& dx = grad_buffer(n.in_list[t]);
        for (int j = 0; j < d; ++j) dx[j] += g.at(static_cast<int>(t), j);
      }
      break;
    }
    case Op::kHCat: {
      const Tensor& av = nodes_[n.in0].value;
      const int t = av.rows(), p = av.cols();
      const int q = n.value.cols() - p;
      Tensor& da = grad_buffer(n.in0);
      Tensor& db = grad_buffer(n.in1);
      for (int i = 0; i < t; ++i) {
        for (int j = 0; j < p; ++j) da.at(i, j) += g.at(i, j);
        for (int j = 0; j < q; ++j) db.at(i, j) += g.at(i, p + j);
      }
      break;
    }
    case Op::kRow: {
      Tensor& dx = grad_buffer(n.in0);
      const int d = static_cast<int>(g.numel());
      for (int j = 0; j < d; ++j) dx.at(n.i0, j) += g[j];
      break;
    }
    case Op::kSlice: {
      Tensor& dx = grad_buffer(n.in0);
      for (int i = 0; i < n.i1; ++i) dx[n.i0 + i] += g[i];
      break;
    }
    case Op::kFlatten: {
      Tensor& dx = grad_buffer(n.in0);
      for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
      break;
    }
    case Op::kLeaf:
      break;
  }
}

}  // namespace milattn
