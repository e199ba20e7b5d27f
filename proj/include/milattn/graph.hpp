#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "milattn/tensor.hpp"

namespace milattn {

using NodeId = int;
inline constexpr NodeId kInvalidNode = -1;

// Reverse-mode autodiff tape. Nodes are appended in topological order; each
// op computes its value eagerly and records what backward needs. A Graph is
// confined to one thread during forward/backward; distinct Graphs may run in
// parallel. Node values are immutable after creation.
class Graph {
 public:
  explicit Graph(bool check_finite = false) : check_finite_(check_finite) {}

  // Leaves. Trainable leaves always receive a gradient from backward(),
  // zero if unreachable from the loss.
  NodeId leaf(Tensor value, bool trainable = false);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  // a[p x q] * b[q x r] -> [p x r]. Rank-1 operands act as a row vector on
  // the left / column vector on the right, producing a rank-1 result.
  NodeId matmul(NodeId a, NodeId b);

  // Same-shape elementwise ops.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // Hadamard product

  // m[T x d] + bias[d], broadcast over rows (the one broadcast the model
  // needs; anything else is a shape error by design).
  NodeId add_bias(NodeId m, NodeId bias);

  // Row t of m[T x d] scaled by (1 + w[t]).
  NodeId modulate(NodeId m, NodeId w);

  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);

  // Rank-1 softmax, computed with max subtraction.
  NodeId softmax(NodeId x);

  // Each row divided by max(||row||_2, 1e-8).
  NodeId l2_normalize_rows(NodeId x);

  NodeId square(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId log(NodeId x);
  NodeId clamp_min(NodeId x, double floor);
  // a * x + b, elementwise with scalar constants.
  NodeId affine(NodeId x, double a, double b);

  // Whole-tensor reductions to a scalar (shape {1}). Max routes its gradient
  // to the first maximal element.
  NodeId reduce_sum(NodeId x);
  NodeId reduce_mean(NodeId x);
  NodeId reduce_max(NodeId x);

  // [T x d] -> [d], mean over rows.
  NodeId mean_rows(NodeId x);

  // Concatenation family.
  NodeId concat_vec(std::span<const NodeId> parts);   // rank-1 pieces -> rank-1
  NodeId stack_rows(std::span<const NodeId> rows);    // T rank-1 pieces of d -> [T x d]
  NodeId hcat(NodeId a, NodeId b);                    // [T x p],[T x q] -> [T x (p+q)]

  NodeId row(NodeId m, int t);                        // row t of [T x d] -> [d]
  NodeId slice(NodeId v, int begin, int len);         // rank-1 slice
  NodeId flatten(NodeId x);                           // reshape to rank-1

  const Tensor& value(NodeId id) const;

  // Reverse accumulation from a scalar loss node. Gradients of earlier
  // backward calls on this graph are discarded first, so repeated calls are
  // bit-identical.
  void backward(NodeId loss);

  // Gradient computed by the last backward(). Empty tensor for nodes the
  // loss does not reach (trainable leaves get explicit zeros instead).
  const Tensor& grad(NodeId id) const;

  void clear();
  int size() const { return static_cast<int>(nodes_.size()); }

  // Test hook: scales the first trainable leaf's gradient by 1.01 so the
  // finite-difference harness has a negative control.
  void set_test_corruption(bool on) { corrupt_backward_ = on; }

 private:
  enum class Op : uint8_t {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kMul,
    kAddBias,
    kModulate,
    kSigmoid,
    kTanh,
    kRelu,
    kSoftmax,
    kL2NormalizeRows,
    kSquare,
    kSqrt,
    kLog,
    kClampMin,
    kAffine,
    kReduceSum,
    kReduceMean,
    kReduceMax,
    kMeanRows,
    kConcatVec,
    kStackRows,
    kHCat,
    kRow,
    kSlice,
    kFlatten,
  };

  struct Node {
    Op op = Op::kLeaf;
    NodeId in0 = kInvalidNode;
    NodeId in1 = kInvalidNode;
    std::vector<NodeId> in_list;  // concat/stack only
    Tensor value;
    Tensor grad;
    std::vector<double> aux;  // saved activations for backward (row norms etc.)
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0;
    bool trainable = false;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  Tensor& grad_buffer(NodeId id);
  void backward_step(const Node& n);

  // Deque keeps value()/grad() references stable while later ops append.
  std::deque<Node> nodes_;
  bool check_finite_ = false;
  bool corrupt_backward_ = false;
};

}  // namespace milattn
