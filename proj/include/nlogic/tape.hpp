#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlogic/rng.hpp"

namespace nlogic {

struct Shape {
  int rows = 0;
  int cols = 1;
  int size() const { return rows * cols; }
  bool operator==(const Shape& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool is_vector() const { return cols == 1; }
  std::string str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

using NodeId = int32_t;

enum class Op : uint8_t {
  Leaf,
  Const,
  Affine,   // W x + b
  MatVec,   // W x
  Concat,
  Relu,
  Sigmoid,
  Cosine,
  Dot,
  Dropout,
  L2NormSq,
  Add,
  Sub,
  Mul,
  Scale,     // c0 * x
  AddConst,  // x + c0
  Ln,
  Clamp,    // clamp(x, c0, c1); gradient passes only strictly inside
  SumList,  // sum of scalar nodes
};

// Reverse-mode tape with eager forward evaluation. Node values and gradients
// live in one arena so rewinding to a mark is O(1) and allocation-free in
// steady state. Node ids are topological by construction: every input id is
// smaller than the node that consumes it.
class Tape {
 public:
  struct Mark {
    size_t nodes = 0, arena = 0, iarena = 0;
  };

  Tape() { reserve(1 << 12, 1 << 16); }

  void reserve(size_t nodes, size_t doubles) {
    nodes_.reserve(nodes);
    touched_.reserve(nodes);
    arena_.reserve(doubles);
  }

  // --- node constructors (forward value computed immediately) ---
  NodeId leaf(Shape s, const double* src);
  NodeId leaf_zero(Shape s);
  NodeId constant(double v);
  NodeId affine(NodeId W, NodeId x, NodeId b);
  NodeId matvec(NodeId W, NodeId x);
  NodeId concat(NodeId a, NodeId b);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId cosine(NodeId a, NodeId b);
  NodeId dot(NodeId a, NodeId b);
  // Training-mode inverted dropout; in eval mode callers skip the node.
  NodeId dropout(NodeId x, double rate, Rng& rng);
  NodeId l2_norm_sq(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double c);
  NodeId add_const(NodeId x, double c);
  NodeId ln(NodeId x);
  NodeId clamp(NodeId x, double lo, double hi);
  NodeId sum_list(const std::vector<NodeId>& xs);

  // --- access ---
  size_t size() const { return nodes_.size(); }
  Shape shape(NodeId id) const { return nodes_[id].shape; }
  const double* data(NodeId id) const { return arena_.data() + nodes_[id].data; }
  double* data(NodeId id) { return arena_.data() + nodes_[id].data; }
  const double* grad(NodeId id) const { return arena_.data() + nodes_[id].grad; }
  double* grad(NodeId id) { return arena_.data() + nodes_[id].grad; }
  double value(NodeId id) const { return *data(id); }
  Op op(NodeId id) const { return nodes_[id].op; }
  NodeId input0(NodeId id) const { return nodes_[id].in0; }
  NodeId input1(NodeId id) const { return nodes_[id].in1; }

  // --- autodiff ---
  // Accumulates d(root)/d(node) into every node's grad, sweeping node ids
  // root .. stop_id. Nodes below stop_id receive gradient contributions but
  // are not themselves propagated (used for deferred subgraphs).
  void backward(NodeId root, NodeId stop_id = 0);
  // Continues propagation for nodes hi .. lo using gradients already
  // accumulated on them (no fresh seed).
  void propagate_pending(NodeId hi, NodeId lo = 0);

  void zero_grad();

  // --- rewind ---
  Mark mark() const { return {nodes_.size(), arena_.size(), iarena_.size()}; }
  void rewind(const Mark& m) {
    nodes_.resize(m.nodes);
    touched_.resize(m.nodes);
    arena_.resize(m.arena);
    iarena_.resize(m.iarena);
  }
  void clear() { rewind(Mark{}); }

 private:
  struct Node {
    Op op;
    Shape shape;
    NodeId in0 = -1, in1 = -1, in2 = -1;
    size_t data = 0, grad = 0;
    size_t aux = 0;  // arena offset (dropout mask, cosine cache) or iarena offset
    int aux_n = 0;
    double c0 = 0.0, c1 = 0.0;
  };

  size_t alloc(size_t n) {
    size_t off = arena_.size();
    arena_.resize(off + n, 0.0);
    return off;
  }

  NodeId push(Op op, Shape s, NodeId a = -1, NodeId b = -1, NodeId c = -1);
  void backprop_node(NodeId id);
  void touch(NodeId id) {
    if (!touched_[static_cast<size_t>(id)])
      touched_[static_cast<size_t>(id)] = 1;
  }

  std::vector<Node> nodes_;
  std::vector<double> arena_;
  std::vector<int32_t> iarena_;
  std::vector<uint8_t> touched_;
};

}  // namespace nlogic
