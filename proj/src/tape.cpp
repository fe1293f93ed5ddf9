#include "nlogic/tape.hpp"

#include <cmath>
#include <cstring>

#include "nlogic/errors.hpp"
#include "nlogic/kernels.hpp"

namespace nlogic {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

NodeId Tape::push(Op op, Shape s, NodeId a, NodeId b, NodeId c) {
  Node n;
  n.op = op;
  n.shape = s;
  n.in0 = a;
  n.in1 = b;
  n.in2 = c;
  n.data = alloc(static_cast<size_t>(s.size()));
  n.grad = alloc(static_cast<size_t>(s.size()));  // zero-initialized
  nodes_.push_back(n);
  touched_.push_back(0);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Shape s, const double* src) {
  NodeId id = push(Op::Leaf, s);
  std::memcpy(data(id), src, sizeof(double) * static_cast<size_t>(s.size()));
  return id;
}

NodeId Tape::leaf_zero(Shape s) { return push(Op::Leaf, s); }

NodeId Tape::constant(double v) {
  NodeId id = push(Op::Const, Shape{1, 1});
  *data(id) = v;
  return id;
}

NodeId Tape::affine(NodeId W, NodeId x, NodeId b) {
  Shape sw = shape(W), sx = shape(x), sb = shape(b);
  if (sw.cols != sx.rows || !sx.is_vector() || !sb.is_vector() ||
      sb.rows != sw.rows) {
    throw DimensionError("affine: incompatible shapes W=" + sw.str() +
                         " x=" + sx.str() + " b=" + sb.str());
  }
  NodeId id = push(Op::Affine, Shape{sw.rows, 1}, W, x, b);
  kern::matvec(data(W), data(x), data(id), sw.rows, sw.cols);
  kern::acc(data(id), data(b), sw.rows);
  return id;
}

NodeId Tape::matvec(NodeId W, NodeId x) {
  Shape sw = shape(W), sx = shape(x);
  if (sw.cols != sx.rows || !sx.is_vector()) {
    throw DimensionError("matvec: incompatible shapes W=" + sw.str() +
                         " x=" + sx.str());
  }
  NodeId id = push(Op::MatVec, Shape{sw.rows, 1}, W, x);
  kern::matvec(data(W), data(x), data(id), sw.rows, sw.cols);
  return id;
}

NodeId Tape::concat(NodeId a, NodeId b) {
  Shape sa = shape(a), sb = shape(b);
  if (!sa.is_vector() || !sb.is_vector())
    throw DimensionError("concat: expects vectors, got " + sa.str() + " and " +
                         sb.str());
  NodeId id = push(Op::Concat, Shape{sa.rows + sb.rows, 1}, a, b);
  std::memcpy(data(id), data(a), sizeof(double) * static_cast<size_t>(sa.rows));
  std::memcpy(data(id) + sa.rows, data(b),
              sizeof(double) * static_cast<size_t>(sb.rows));
  return id;
}

NodeId Tape::relu(NodeId x) {
  Shape s = shape(x);
  NodeId id = push(Op::Relu, s, x);
  kern::relu(data(x), data(id), s.size());
  return id;
}

NodeId Tape::sigmoid(NodeId x) {
  if (!shape(x).is_scalar())
    throw DimensionError("sigmoid: expects a scalar, got " + shape(x).str());
  NodeId id = push(Op::Sigmoid, Shape{1, 1}, x);
  *data(id) = kern::sigmoid(value(x));
  return id;
}

NodeId Tape::cosine(NodeId a, NodeId b) {
  Shape sa = shape(a), sb = shape(b);
  if (!(sa == sb) || !sa.is_vector())
    throw DimensionError("cosine: expects equal-length vectors, got " +
                         sa.str() + " and " + sb.str());
  int n = sa.rows;
  double na = std::sqrt(kern::norm_sq(data(a), n));
  double nb = std::sqrt(kern::norm_sq(data(b), n));
  if (na < kDegenerateNorm || nb < kDegenerateNorm)
    throw DegenerateVectorError("cosine: near-zero-norm input (|a|=" +
                                std::to_string(na) + ", |b|=" +
                                std::to_string(nb) + ")");
  double d = kern::dot(data(a), data(b), n);
  NodeId id = push(Op::Cosine, Shape{1, 1}, a, b);
  Node& node = nodes_[id];
  node.aux = alloc(3);
  node.aux_n = 3;
  arena_[node.aux] = d;
  arena_[node.aux + 1] = na;
  arena_[node.aux + 2] = nb;
  *data(id) = d / (na * nb);
  return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
  Shape sa = shape(a), sb = shape(b);
  if (!(sa == sb) || !sa.is_vector())
    throw DimensionError("dot: expects equal-length vectors, got " + sa.str() +
                         " and " + sb.str());
  NodeId id = push(Op::Dot, Shape{1, 1}, a, b);
  *data(id) = kern::dot(data(a), data(b), sa.rows);
  return id;
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1), got " +
                      std::to_string(rate));
  Shape s = shape(x);
  NodeId id = push(Op::Dropout, s, x);
  Node& node = nodes_[id];
  int n = s.size();
  node.aux = alloc(static_cast<size_t>(n));
  node.aux_n = n;
  double keep_scale = 1.0 / (1.0 - rate);
  double* mask = arena_.data() + node.aux;
  for (int i = 0; i < n; ++i)
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  const double* xin = data(x);
  double* out = data(id);
  for (int i = 0; i < n; ++i) out[i] = xin[i] * mask[i];
  return id;
}

NodeId Tape::l2_norm_sq(NodeId x) {
  NodeId id = push(Op::L2NormSq, Shape{1, 1}, x);
  *data(id) = kern::norm_sq(data(x), shape(x).size());
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  Shape sa = shape(a);
  if (!(sa == shape(b)))
    throw DimensionError("add: shape mismatch " + sa.str() + " vs " +
                         shape(b).str());
  NodeId id = push(Op::Add, sa, a, b);
  kern::add(data(a), data(b), data(id), sa.size());
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  Shape sa = shape(a);
  if (!(sa == shape(b)))
    throw DimensionError("sub: shape mismatch " + sa.str() + " vs " +
                         shape(b).str());
  NodeId id = push(Op::Sub, sa, a, b);
  const double* pa = data(a);
  const double* pb = data(b);
  double* y = data(id);
  for (int i = 0; i < sa.size(); ++i) y[i] = pa[i] - pb[i];
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  Shape sa = shape(a);
  if (!(sa == shape(b)))
    throw DimensionError("mul: shape mismatch " + sa.str() + " vs " +
                         shape(b).str());
  NodeId id = push(Op::Mul, sa, a, b);
  const double* pa = data(a);
  const double* pb = data(b);
  double* y = data(id);
  for (int i = 0; i < sa.size(); ++i) y[i] = pa[i] * pb[i];
  return id;
}

NodeId Tape::scale(NodeId x, double c) {
  Shape s = shape(x);
  NodeId id = push(Op::Scale, s, x);
  nodes_[id].c0 = c;
  const double* px = data(x);
  double* y = data(id);
  for (int i = 0; i < s.size(); ++i) y[i] = c * px[i];
  return id;
}

NodeId Tape::add_const(NodeId x, double c) {
  Shape s = shape(x);
  NodeId id = push(Op::AddConst, s, x);
  nodes_[id].c0 = c;
  const double* px = data(x);
  double* y = data(id);
  for (int i = 0; i < s.size(); ++i) y[i] = px[i] + c;
  return id;
}

NodeId Tape::ln(NodeId x) {
  if (!shape(x).is_scalar())
    throw DimensionError("ln: expects a scalar, got " + shape(x).str());
  if (value(x) <= 0.0)
    throw NumericError("ln: non-positive argument " + std::to_string(value(x)));
  NodeId id = push(Op::Ln, Shape{1, 1}, x);
  *data(id) = std::log(value(x));
  return id;
}

NodeId Tape::clamp(NodeId x, double lo, double hi) {
  Shape s = shape(x);
  NodeId id = push(Op::Clamp, s, x);
  nodes_[id].c0 = lo;
  nodes_[id].c1 = hi;
  const double* px = data(x);
  double* y = data(id);
  for (int i = 0; i < s.size(); ++i)
    y[i] = px[i] < lo ? lo : (px[i] > hi ? hi : px[i]);
  return id;
}

NodeId Tape::sum_list(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ContractError("sum_list: empty input");
  for (NodeId x : xs)
    if (!shape(x).is_scalar())
      throw DimensionError("sum_list: all inputs must be scalars");
  NodeId id = push(Op::SumList, Shape{1, 1});
  Node& node = nodes_[id];
  node.aux = iarena_.size();
  node.aux_n = static_cast<int>(xs.size());
  iarena_.insert(iarena_.end(), xs.begin(), xs.end());
  double acc = 0.0;
  for (NodeId x : xs) acc += value(x);
  *data(id) = acc;
  return id;
}

void Tape::backward(NodeId root, NodeId stop_id) {
  if (!shape(root).is_scalar())
    throw ContractError("backward: root must be a scalar, got shape " +
                        shape(root).str());
  grad(root)[0] += 1.0;
  touch(root);
  propagate_pending(root, stop_id);
}

void Tape::propagate_pending(NodeId hi, NodeId lo) {
  for (NodeId i = hi; i >= lo; --i) {
    if (!touched_[static_cast<size_t>(i)]) continue;
    backprop_node(i);
  }
}

void Tape::backprop_node(NodeId id) {
  const Node& n = nodes_[id];
  const double* g = grad(id);
  switch (n.op) {
    case Op::Leaf:
    case Op::Const:
      break;
    case Op::Affine: {
      Shape sw = shape(n.in0);
      kern::outer_acc(grad(n.in0), g, data(n.in1), sw.rows, sw.cols);
      kern::matvec_t_acc(data(n.in0), g, grad(n.in1), sw.rows, sw.cols);
      kern::acc(grad(n.in2), g, sw.rows);
      touch(n.in0);
      touch(n.in1);
      touch(n.in2);
      break;
    }
    case Op::MatVec: {
      Shape sw = shape(n.in0);
      kern::outer_acc(grad(n.in0), g, data(n.in1), sw.rows, sw.cols);
      kern::matvec_t_acc(data(n.in0), g, grad(n.in1), sw.rows, sw.cols);
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Concat: {
      int na = shape(n.in0).rows;
      int nb = shape(n.in1).rows;
      kern::acc(grad(n.in0), g, na);
      kern::acc(grad(n.in1), g + na, nb);
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Relu: {
      const double* x = data(n.in0);
      double* dx = grad(n.in0);
      for (int i = 0; i < n.shape.size(); ++i)
        if (x[i] > 0.0) dx[i] += g[i];
      touch(n.in0);
      break;
    }
    case Op::Sigmoid: {
      double s = value(id);
      grad(n.in0)[0] += g[0] * s * (1.0 - s);
      touch(n.in0);
      break;
    }
    case Op::Cosine: {
      int len = shape(n.in0).rows;
      double d = arena_[n.aux];
      double na = arena_[n.aux + 1];
      double nb = arena_[n.aux + 2];
      double inv = 1.0 / (na * nb);
      double cosv = d * inv;
      const double* a = data(n.in0);
      const double* b = data(n.in1);
      double* da = grad(n.in0);
      double* db = grad(n.in1);
      double ga = g[0];
      for (int i = 0; i < len; ++i) {
        da[i] += ga * (b[i] * inv - cosv * a[i] / (na * na));
        db[i] += ga * (a[i] * inv - cosv * b[i] / (nb * nb));
      }
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Dot: {
      int len = shape(n.in0).rows;
      kern::axpy_acc(grad(n.in0), g[0], data(n.in1), len);
      kern::axpy_acc(grad(n.in1), g[0], data(n.in0), len);
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Dropout: {
      const double* mask = arena_.data() + n.aux;
      double* dx = grad(n.in0);
      for (int i = 0; i < n.aux_n; ++i) dx[i] += g[i] * mask[i];
      touch(n.in0);
      break;
    }
    case Op::L2NormSq: {
      kern::axpy_acc(grad(n.in0), 2.0 * g[0], data(n.in0), shape(n.in0).size());
      touch(n.in0);
      break;
    }
    case Op::Add: {
      kern::acc(grad(n.in0), g, n.shape.size());
      kern::acc(grad(n.in1), g, n.shape.size());
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Sub: {
      kern::acc(grad(n.in0), g, n.shape.size());
      double* db = grad(n.in1);
      for (int i = 0; i < n.shape.size(); ++i) db[i] -= g[i];
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Mul: {
      const double* a = data(n.in0);
      const double* b = data(n.in1);
      double* da = grad(n.in0);
      double* db = grad(n.in1);
      for (int i = 0; i < n.shape.size(); ++i) {
        da[i] += g[i] * b[i];
        db[i] += g[i] * a[i];
      }
      touch(n.in0);
      touch(n.in1);
      break;
    }
    case Op::Scale: {
      kern::axpy_acc(grad(n.in0), n.c0, g, n.shape.size());
      touch(n.in0);
      break;
    }
    case Op::AddConst: {
      kern::acc(grad(n.in0), g, n.shape.size());
      touch(n.in0);
      break;
    }
    case Op::Ln: {
      grad(n.in0)[0] += g[0] / value(n.in0);
      touch(n.in0);
      break;
    }
    case Op::Clamp: {
      const double* x = data(n.in0);
      double* dx = grad(n.in0);
      for (int i = 0; i < n.shape.size(); ++i)
        if (x[i] > n.c0 && x[i] < n.c1) dx[i] += g[i];
      touch(n.in0);
      break;
    }
    case Op::SumList: {
      for (int k = 0; k < n.aux_n; ++k) {
        NodeId in = iarena_[n.aux + static_cast<size_t>(k)];
        grad(in)[0] += g[0];
        touch(in);
      }
      break;
    }
  }
}

void Tape::zero_grad() {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    std::memset(arena_.data() + n.grad, 0,
                sizeof(double) * static_cast<size_t>(n.shape.size()));
    touched_[i] = 0;
  }
}

}  // namespace nlogic
