#pragma once

// Dense float64 tensors with a tape-based reverse-mode autodiff graph.
//
// A Graph is an append-only list of nodes; every op appends its output and
// records its inputs, so node order is already a topological order. The
// backward sweep walks the tape from the loss down to node 0.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bsp::nd {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] inline void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_extents();
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != data_.size()) shape_fail("reshape", shape_, s);
    return Tensor(std::move(s), data_);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_extents() const {
    for (auto e : shape_)
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Named, ordered parameter table. Ordering is by name so iteration is
/// deterministic.
using ParamSet = std::map<std::string, Tensor>;

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void accumulate(std::optional<Tensor>& slot, const Tensor& g) {
  if (!slot) {
    slot = g;
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

enum class Op {
  leaf,
  matmul,
  add,
  add_bias,
  sub,
  scale,
  relu,
  conv1d,
  mean_axis,
  concat_last,
  reshape,
  squared_l2_distance,
  softmax_cross_entropy,
  smooth_l1_sum,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_bias: return "add_bias";
    case Op::sub: return "sub";
    case Op::scale: return "scale";
    case Op::relu: return "relu";
    case Op::conv1d: return "temporal_conv1d";
    case Op::mean_axis: return "mean_over_axis";
    case Op::concat_last: return "concat_last_axis";
    case Op::reshape: return "reshape";
    case Op::squared_l2_distance: return "squared_l2_distance";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
    case Op::smooth_l1_sum: return "smooth_l1_sum";
  }
  return "?";
}

class Gradients;

class Graph {
 public:
  /// Constant input; never receives a gradient.
  NodeId input(Tensor value) { return push(Op::leaf, {}, std::move(value), false); }
  /// Differentiable leaf.
  NodeId param(Tensor value) { return push(Op::leaf, {}, std::move(value), true); }

  /// [M,K] x [K,N] -> [M,N]
  NodeId matmul(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) shape_fail("matmul", A.shape(), B.shape());
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out(Shape{m, n});
    detail::as_mat(out, m, n).noalias() = detail::as_mat(A, m, k) * detail::as_mat(B, k, n);
    return push(Op::matmul, {a, b}, std::move(out));
  }

  /// Elementwise sum of equal shapes, or a rank-1 bias broadcast over the
  /// last axis of `a`.
  NodeId add(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() == B.shape()) {
      Tensor out = A;
      auto o = out.data();
      auto bd = B.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
      return push(Op::add, {a, b}, std::move(out));
    }
    if (B.rank() == 1 && A.rank() >= 1 && A.shape().back() == B.dim(0)) {
      Tensor out = A;
      auto o = out.data();
      auto bd = B.data();
      const std::size_t c = B.dim(0);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % c];
      return push(Op::add_bias, {a, b}, std::move(out));
    }
    shape_fail("add", A.shape(), B.shape());
  }

  NodeId sub(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() != B.shape()) shape_fail("sub", A.shape(), B.shape());
    Tensor out = A;
    auto o = out.data();
    auto bd = B.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return push(Op::sub, {a, b}, std::move(out));
  }

  NodeId scale(NodeId a, double factor) {
    Tensor out = value(a);
    for (auto& v : out.data()) v *= factor;
    NodeId id = push(Op::scale, {a}, std::move(out));
    nodes_[id].factor = factor;
    return id;
  }

  NodeId relu(NodeId a) {
    Tensor out = value(a);
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(Op::relu, {a}, std::move(out));
  }

  /// x: [B,T,Cin], w: [k,Cin,Cout] with odd k. Stride 1, zero padding of
  /// (k-1)/2 on both ends so the output keeps length T.
  NodeId temporal_conv1d(NodeId x, NodeId w) {
    const auto& X = value(x);
    const auto& W = value(w);
    if (X.rank() != 3 || W.rank() != 3 || W.dim(1) != X.dim(2) || W.dim(0) % 2 == 0)
      shape_fail("temporal_conv1d", X.shape(), W.shape());
    const std::size_t B = X.dim(0), T = X.dim(1), ci = X.dim(2), k = W.dim(0), co = W.dim(2);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    Tensor out(Shape{B, T, co});
    auto Y = detail::as_mat(out, B * T, co);
    auto Xm = detail::as_mat(X, B * T, ci);
    detail::RowMat Z(static_cast<Eigen::Index>(B * T), static_cast<Eigen::Index>(co));
    for (std::size_t j = 0; j < k; ++j) {
      Z.noalias() = Xm * detail::ConstMatMap(W.data().data() + j * ci * co, ci, co);
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
      for_shifted_rows(B, T, off, [&](Eigen::Index dst, Eigen::Index src, Eigen::Index n) {
        Y.middleRows(dst, n) += Z.middleRows(src, n);
      });
    }
    return push(Op::conv1d, {x, w}, std::move(out));
  }

  /// Mean over one axis; the axis is removed from the output shape.
  NodeId mean_over_axis(NodeId a, std::size_t axis) {
    const auto& A = value(a);
    if (axis >= A.rank()) shape_fail("mean_over_axis", A.shape(), Shape{axis});
    const auto [outer, n, inner] = split_axis(A.shape(), axis);
    Shape os = A.shape();
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor out(os);
    auto src = A.data();
    auto dst = out.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < inner; ++i) dst[o * inner + i] += src[(o * n + j) * inner + i];
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : dst) v *= inv;
    NodeId id = push(Op::mean_axis, {a}, std::move(out));
    nodes_[id].axis = axis;
    return id;
  }

  NodeId concat_last_axis(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rank() != B.rank() || A.rank() == 0 ||
        !std::equal(A.shape().begin(), A.shape().end() - 1, B.shape().begin()))
      shape_fail("concat_last_axis", A.shape(), B.shape());
    const std::size_t ca = A.shape().back(), cb = B.shape().back(), rows = A.size() / ca;
    Shape os = A.shape();
    os.back() = ca + cb;
    Tensor out(os);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(A.data().data() + r * ca, ca, out.data().data() + r * (ca + cb));
      std::copy_n(B.data().data() + r * cb, cb, out.data().data() + r * (ca + cb) + ca);
    }
    return push(Op::concat_last, {a, b}, std::move(out));
  }

  NodeId reshape(NodeId a, Shape s) { return push(Op::reshape, {a}, value(a).reshaped(std::move(s))); }

  /// Scalar sum over all elements of (a-b)^2.
  NodeId squared_l2_distance(NodeId a, NodeId b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() != B.shape()) shape_fail("squared_l2_distance", A.shape(), B.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double d = A[i] - B[i];
      s += d * d;
    }
    return push(Op::squared_l2_distance, {a, b}, Tensor::scalar(s));
  }

  /// Mean over the batch of -log softmax(z)[y]. Logits are [B,K], or [K]
  /// for a single example.
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const auto& Z = value(logits);
    if (Z.rank() != 1 && Z.rank() != 2) shape_fail("softmax_cross_entropy", Z.shape(), Shape{labels.size()});
    const std::size_t B = Z.rank() == 1 ? 1 : Z.dim(0);
    const std::size_t K = Z.shape().back();
    if (labels.size() != B) shape_fail("softmax_cross_entropy", Z.shape(), Shape{labels.size()});
    Tensor probs(Z.shape());
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const int y = labels[b];
      if (y < 0 || static_cast<std::size_t>(y) >= K)
        throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                                std::to_string(K) + ")");
      const double* z = Z.data().data() + b * K;
      const double mx = *std::max_element(z, z + K);
      double se = 0.0;
      for (std::size_t c = 0; c < K; ++c) se += std::exp(z[c] - mx);
      const double lse = mx + std::log(se);
      for (std::size_t c = 0; c < K; ++c) probs[b * K + c] = std::exp(z[c] - lse);
      loss += lse - z[y];
    }
    NodeId id = push(Op::softmax_cross_entropy, {logits}, Tensor::scalar(loss / static_cast<double>(B)));
    nodes_[id].labels = std::move(labels);
    nodes_[id].cache = std::move(probs);
    return id;
  }

  /// Scalar sum of 0.5 d^2 for |d| < 1 and |d| - 0.5 otherwise.
  NodeId smooth_l1_sum(NodeId d) {
    double s = 0.0;
    for (double v : value(d).data()) {
      const double a = std::abs(v);
      s += a < 1.0 ? 0.5 * v * v : a - 0.5;
    }
    return push(Op::smooth_l1_sum, {d}, Tensor::scalar(s));
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).grad; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  friend Gradients gradients(const Graph& g, NodeId loss);

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool grad = false;
    std::size_t axis = 0;
    double factor = 1.0;
    std::vector<int> labels;
    Tensor cache;
  };

  NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, std::optional<bool> grad = std::nullopt) {
    Node n;
    n.op = op;
    n.grad = grad.value_or(
        std::any_of(inputs.begin(), inputs.end(), [&](NodeId i) { return nodes_.at(i).grad; }));
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  static std::tuple<std::size_t, std::size_t, std::size_t> split_axis(const Shape& s, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    return {outer, s[axis], inner};
  }

  // Calls fn(dst_row, src_row, count) for each batch element: output row
  // t receives input row t+off where that index is inside the sequence.
  template <typename Fn>
  static void for_shifted_rows(std::size_t B, std::size_t T, std::ptrdiff_t off, Fn&& fn) {
    const auto t = static_cast<std::ptrdiff_t>(T);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(t, t - off);
    if (hi <= lo) return;
    for (std::size_t b = 0; b < B; ++b) {
      const auto base = static_cast<std::ptrdiff_t>(b) * t;
      fn(base + lo, base + lo + off, hi - lo);
    }
  }

  void backward_node(NodeId id, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const;

  std::vector<Node> nodes_;
};

class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor>> g) : grads_(std::move(g)) {}

  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }

  /// Throws for nodes the loss does not depend on.
  const Tensor& at(NodeId id) const {
    if (!has(id)) throw std::out_of_range("gradients: no gradient recorded for node " + std::to_string(id));
    return *grads_[id];
  }

 private:
  std::vector<std::optional<Tensor>> grads_;
};

inline void Graph::backward_node(NodeId id, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const {
  const Node& n = nodes_[id];
  auto want = [&](std::size_t k) { return nodes_[n.inputs[k]].grad; };
  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul: {
      const auto& A = nodes_[n.inputs[0]].value;
      const auto& B = nodes_[n.inputs[1]].value;
      const std::size_t m = A.dim(0), k = A.dim(1), c = B.dim(1);
      auto G = detail::as_mat(g, m, c);
      if (want(0)) {
        Tensor ga(A.shape());
        detail::as_mat(ga, m, k).noalias() = G * detail::as_mat(B, k, c).transpose();
        detail::accumulate(grads[n.inputs[0]], ga);
      }
      if (want(1)) {
        Tensor gb(B.shape());
        detail::as_mat(gb, k, c).noalias() = detail::as_mat(A, m, k).transpose() * G;
        detail::accumulate(grads[n.inputs[1]], gb);
      }
      return;
    }
    case Op::add:
      if (want(0)) detail::accumulate(grads[n.inputs[0]], g);
      if (want(1)) detail::accumulate(grads[n.inputs[1]], g);
      return;
    case Op::add_bias: {
      if (want(0)) detail::accumulate(grads[n.inputs[0]], g);
      if (want(1)) {
        const auto& bshape = nodes_[n.inputs[1]].value.shape();
        Tensor gb(bshape);
        const std::size_t c = bshape[0];
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
        detail::accumulate(grads[n.inputs[1]], gb);
      }
      return;
    }
    case Op::sub: {
      if (want(0)) detail::accumulate(grads[n.inputs[0]], g);
      if (want(1)) {
        Tensor neg = g;
        for (auto& v : neg.data()) v = -v;
        detail::accumulate(grads[n.inputs[1]], neg);
      }
      return;
    }
    case Op::scale: {
      Tensor s = g;
      for (auto& v : s.data()) v *= n.factor;
      detail::accumulate(grads[n.inputs[0]], s);
      return;
    }
    case Op::relu: {
      const auto& out = n.value;
      Tensor s = g;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (!(out[i] > 0.0)) s[i] = 0.0;
      detail::accumulate(grads[n.inputs[0]], s);
      return;
    }
    case Op::conv1d: {
      const auto& X = nodes_[n.inputs[0]].value;
      const auto& W = nodes_[n.inputs[1]].value;
      const std::size_t B = X.dim(0), T = X.dim(1), ci = X.dim(2), k = W.dim(0), co = W.dim(2);
      const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
      auto G = detail::as_mat(g, B * T, co);
      auto Xm = detail::as_mat(X, B * T, ci);
      if (want(0)) {
        Tensor gx(X.shape());
        auto GX = detail::as_mat(gx, B * T, ci);
        detail::RowMat Z(static_cast<Eigen::Index>(B * T), static_cast<Eigen::Index>(ci));
        for (std::size_t j = 0; j < k; ++j) {
          Z.noalias() = G * detail::ConstMatMap(W.data().data() + j * ci * co, ci, co).transpose();
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          for_shifted_rows(B, T, off, [&](Eigen::Index dst, Eigen::Index src, Eigen::Index cnt) {
            GX.middleRows(src, cnt) += Z.middleRows(dst, cnt);
          });
        }
        detail::accumulate(grads[n.inputs[0]], gx);
      }
      if (want(1)) {
        Tensor gw(W.shape());
        detail::RowMat shifted(static_cast<Eigen::Index>(B * T), static_cast<Eigen::Index>(ci));
        for (std::size_t j = 0; j < k; ++j) {
          shifted.setZero();
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          for_shifted_rows(B, T, off, [&](Eigen::Index dst, Eigen::Index src, Eigen::Index cnt) {
            shifted.middleRows(dst, cnt) = Xm.middleRows(src, cnt);
          });
          detail::MatMap(gw.data().data() + j * ci * co, ci, co).noalias() = shifted.transpose() * G;
        }
        detail::accumulate(grads[n.inputs[1]], gw);
      }
      return;
    }
    case Op::mean_axis: {
      const auto& A = nodes_[n.inputs[0]].value;
      const auto [outer, cnt, inner] = split_axis(A.shape(), n.axis);
      Tensor ga(A.shape());
      const double inv = 1.0 / static_cast<double>(cnt);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < cnt; ++j)
          for (std::size_t i = 0; i < inner; ++i) ga[(o * cnt + j) * inner + i] = g[o * inner + i] * inv;
      detail::accumulate(grads[n.inputs[0]], ga);
      return;
    }
    case Op::concat_last: {
      const auto& A = nodes_[n.inputs[0]].value;
      const auto& Bv = nodes_[n.inputs[1]].value;
      const std::size_t ca = A.shape().back(), cb = Bv.shape().back(), rows = A.size() / ca;
      if (want(0)) {
        Tensor ga(A.shape());
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(g.data().data() + r * (ca + cb), ca, ga.data().data() + r * ca);
        detail::accumulate(grads[n.inputs[0]], ga);
      }
      if (want(1)) {
        Tensor gb(Bv.shape());
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(g.data().data() + r * (ca + cb) + ca, cb, gb.data().data() + r * cb);
        detail::accumulate(grads[n.inputs[1]], gb);
      }
      return;
    }
    case Op::reshape:
      detail::accumulate(grads[n.inputs[0]], g.reshaped(nodes_[n.inputs[0]].value.shape()));
      return;
    case Op::squared_l2_distance: {
      const auto& A = nodes_[n.inputs[0]].value;
      const auto& Bv = nodes_[n.inputs[1]].value;
      const double s = g.item();
      Tensor ga(A.shape());
      for (std::size_t i = 0; i < A.size(); ++i) ga[i] = 2.0 * s * (A[i] - Bv[i]);
      if (want(0)) detail::accumulate(grads[n.inputs[0]], ga);
      if (want(1)) {
        for (auto& v : ga.data()) v = -v;
        detail::accumulate(grads[n.inputs[1]], ga);
      }
      return;
    }
    case Op::softmax_cross_entropy: {
      const auto& Z = nodes_[n.inputs[0]].value;
      const std::size_t K = Z.shape().back(), B = Z.size() / K;
      const double s = g.item() / static_cast<double>(B);
      Tensor gz = n.cache;
      for (std::size_t b = 0; b < B; ++b) {
        gz[b * K + static_cast<std::size_t>(n.labels[b])] -= 1.0;
        for (std::size_t c = 0; c < K; ++c) gz[b * K + c] *= s;
      }
      detail::accumulate(grads[n.inputs[0]], gz);
      return;
    }
    case Op::smooth_l1_sum: {
      const auto& D = nodes_[n.inputs[0]].value;
      const double s = g.item();
      Tensor gd(D.shape());
      for (std::size_t i = 0; i < D.size(); ++i) {
        const double v = D[i];
        gd[i] = s * (std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0));
      }
      detail::accumulate(grads[n.inputs[0]], gd);
      return;
    }
  }
}

/// Reverse accumulation from a scalar loss. Every differentiable node the
/// loss depends on gets an entry.
inline Gradients gradients(const Graph& g, NodeId loss) {
  const auto& L = g.value(loss);
  if (L.size() != 1) throw ShapeError("gradients: loss must be scalar, got shape " + shape_str(L.shape()));
  std::vector<std::optional<Tensor>> grads(g.size());
  grads[loss] = Tensor(L.shape(), 1.0);
  for (NodeId id = loss + 1; id-- > 0;) {
    if (!grads[id] || !g.nodes_[id].grad) continue;
    g.backward_node(id, *grads[id], grads);
  }
  return Gradients(std::move(grads));
}

/// Momentum SGD state, one velocity per parameter name.
struct SgdState {
  ParamSet velocity;
};

/// v <- momentum*v + g;  p <- p - lr*v.
inline void sgd_step(ParamSet& params, const ParamSet& grads, SgdState& state, double lr, double momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (g.shape() != p.shape()) shape_fail(("sgd_step(" + name + ")").c_str(), p.shape(), g.shape());
    auto [vit, inserted] = state.velocity.try_emplace(name, Tensor(p.shape()));
    Tensor& v = vit->second;
    auto pd = p.data();
    auto vd = v.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      vd[i] = momentum * vd[i] + gd[i];
      pd[i] -= lr * vd[i];
    }
  }
}

/// Binds every tensor of a ParamSet as graph leaves.
inline std::map<std::string, NodeId> bind(Graph& g, const ParamSet& params, bool trainable) {
  std::map<std::string, NodeId> ids;
  for (const auto& [name, t] : params) ids.emplace(name, trainable ? g.param(t) : g.input(t));
  return ids;
}

/// Collects the gradients of bound parameters back into a ParamSet; a
/// parameter the loss did not reach gets zeros.
inline ParamSet collect(const Gradients& grads, const std::map<std::string, NodeId>& ids, const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, id] : ids) {
    if (grads.has(id))
      out.emplace(name, grads.at(id));
    else
      out.emplace(name, Tensor(params.at(name).shape()));
  }
  return out;
}

}  // namespace bsp::nd
