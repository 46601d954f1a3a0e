#pragma once

// Reverse-mode differentiation over a fixed set of dense matrix ops.
//
// Nodes are appended in construction order, so every node's inputs precede
// it and the node list is already a topological order. Shapes are explicit:
// there is no broadcasting, a bias row is replicated with matmul(ones, b).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "mash/nn/tensor.hpp"

namespace mash::nn {

using NodeId = std::size_t;

enum class OpKind {
  parameter,
  constant,
  matmul,
  concat,
  add,
  embedding,
  softmax,
  log,
  sigmoid,
  cross_entropy,
  sum,
  scale,
};

std::string_view to_string(OpKind kind);

template <typename T>
struct ComputationNode {
  OpKind op = OpKind::constant;
  std::vector<NodeId> inputs;
  Matrix<T> value;
  Matrix<T> grad;  // allocated lazily during backward
  Parameter<T>* param = nullptr;
  std::vector<std::int32_t> ids;  // embedding rows or cross-entropy targets
  Matrix<T> cache;                // cross-entropy row softmax
  T factor = T{1};
  bool transpose_b = false;
};

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  /// Binds a parameter as a leaf. Binding the same parameter twice returns the same node.
  NodeId parameter(Parameter<T>& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) {
      return it->second;
    }
    ComputationNode<T> node;
    node.op = OpKind::parameter;
    node.value = p.values;
    node.param = &p;
    NodeId id = push(std::move(node));
    bound_.emplace(&p, id);
    return id;
  }

  NodeId constant(Matrix<T> m) {
    ComputationNode<T> node;
    node.op = OpKind::constant;
    node.value = std::move(m);
    return push(std::move(node));
  }

  /// a (n x k) times b (k x m), or b^T when transpose_b (b is m x k).
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false) {
    check_inputs({a, b});
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    const std::size_t inner = transpose_b ? B.cols : B.rows;
    const std::size_t out_cols = transpose_b ? B.rows : B.cols;
    if (A.cols != inner) {
      throw StructuralError("matmul: inner dimensions differ (" + std::to_string(A.cols) + " vs " +
                            std::to_string(inner) + ")");
    }
    ComputationNode<T> node;
    node.op = OpKind::matmul;
    node.inputs = {a, b};
    node.transpose_b = transpose_b;
    node.value = Matrix<T>(A.rows, out_cols);
    if (transpose_b) {
      gemm_nt(A, B, node.value);
    } else {
      gemm_nn(A, B, node.value);
    }
    return push(std::move(node));
  }

  /// Column-wise concatenation [a ; b] of two matrices with equal row counts.
  NodeId concat(NodeId a, NodeId b) {
    check_inputs({a, b});
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    if (A.rows != B.rows) {
      throw StructuralError("concat: row counts differ");
    }
    ComputationNode<T> node;
    node.op = OpKind::concat;
    node.inputs = {a, b};
    node.value = Matrix<T>(A.rows, A.cols + B.cols);
    for (std::size_t r = 0; r < A.rows; ++r) {
      auto dst = node.value.row(r);
      std::copy(A.row(r).begin(), A.row(r).end(), dst.begin());
      std::copy(B.row(r).begin(), B.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(A.cols));
    }
    return push(std::move(node));
  }

  NodeId add(NodeId a, NodeId b) {
    check_inputs({a, b});
    const auto& A = nodes_[a].value;
    const auto& B = nodes_[b].value;
    if (!A.same_shape(B)) {
      throw StructuralError("add: shapes differ");
    }
    ComputationNode<T> node;
    node.op = OpKind::add;
    node.inputs = {a, b};
    node.value = A;
    for (std::size_t i = 0; i < B.data.size(); ++i) {
      node.value.data[i] += B.data[i];
    }
    return push(std::move(node));
  }

  /// Gathers rows of table; output row i is table[ids[i]].
  NodeId embedding(NodeId table, std::vector<std::int32_t> ids) {
    check_inputs({table});
    const auto& E = nodes_[table].value;
    ComputationNode<T> node;
    node.op = OpKind::embedding;
    node.inputs = {table};
    node.value = Matrix<T>(ids.size(), E.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= E.rows) {
        throw StructuralError("embedding: id out of range");
      }
      auto src = E.row(static_cast<std::size_t>(ids[r]));
      std::copy(src.begin(), src.end(), node.value.row(r).begin());
    }
    node.ids = std::move(ids);
    return push(std::move(node));
  }

  /// Row-wise softmax.
  NodeId softmax(NodeId a) {
    check_inputs({a});
    ComputationNode<T> node;
    node.op = OpKind::softmax;
    node.inputs = {a};
    node.value = nodes_[a].value;
    for (std::size_t r = 0; r < node.value.rows; ++r) {
      softmax_row(node.value.row(r));
    }
    return push(std::move(node));
  }

  NodeId log(NodeId a) {
    check_inputs({a});
    ComputationNode<T> node;
    node.op = OpKind::log;
    node.inputs = {a};
    node.value = nodes_[a].value;
    for (auto& v : node.value.data) {
      v = std::log(v);
    }
    return push(std::move(node));
  }

  NodeId sigmoid(NodeId a) {
    check_inputs({a});
    ComputationNode<T> node;
    node.op = OpKind::sigmoid;
    node.inputs = {a};
    node.value = nodes_[a].value;
    for (auto& v : node.value.data) {
      v = logistic(v);
    }
    return push(std::move(node));
  }

  /// Sum over rows of -log softmax(logits[i])[targets[i]]. Output is 1 x 1.
  NodeId cross_entropy(NodeId logits, std::vector<std::int32_t> targets) {
    check_inputs({logits});
    const auto& Z = nodes_[logits].value;
    if (targets.size() != Z.rows) {
      throw StructuralError("cross_entropy: one target per logits row required");
    }
    ComputationNode<T> node;
    node.op = OpKind::cross_entropy;
    node.inputs = {logits};
    node.cache = Z;
    T total{0};
    for (std::size_t r = 0; r < Z.rows; ++r) {
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= Z.cols) {
        throw StructuralError("cross_entropy: target out of range");
      }
      auto row = node.cache.row(r);
      const T max_v = *std::max_element(row.begin(), row.end());
      T sum{0};
      for (auto& v : row) {
        v = std::exp(v - max_v);
        sum += v;
      }
      for (auto& v : row) {
        v /= sum;
      }
      total += (max_v + std::log(sum)) - Z(r, static_cast<std::size_t>(targets[r]));
    }
    node.value = Matrix<T>(1, 1, total);
    node.ids = std::move(targets);
    return push(std::move(node));
  }

  /// Sum of all entries. Output is 1 x 1.
  NodeId sum(NodeId a) {
    check_inputs({a});
    ComputationNode<T> node;
    node.op = OpKind::sum;
    node.inputs = {a};
    T total{0};
    for (T v : nodes_[a].value.data) {
      total += v;
    }
    node.value = Matrix<T>(1, 1, total);
    return push(std::move(node));
  }

  NodeId scale(NodeId a, T factor) {
    check_inputs({a});
    ComputationNode<T> node;
    node.op = OpKind::scale;
    node.inputs = {a};
    node.factor = factor;
    node.value = nodes_[a].value;
    for (auto& v : node.value.data) {
      v *= factor;
    }
    return push(std::move(node));
  }

  [[nodiscard]] const Matrix<T>& value(NodeId id) const { return nodes_.at(id).value; }
  [[nodiscard]] T scalar(NodeId id) const {
    const auto& v = value(id);
    if (v.rows != 1 || v.cols != 1) {
      throw ContractViolation("scalar: node is not 1 x 1");
    }
    return v.data[0];
  }
  [[nodiscard]] const ComputationNode<T>& node(NodeId id) const { return nodes_.at(id); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() loss with respect to a node; empty if unreachable.
  [[nodiscard]] const Matrix<T>& grad(NodeId id) const { return nodes_.at(id).grad; }

  /// Propagates d(loss)/d(node) to every node reachable from loss and adds the
  /// parameter-leaf gradients into Parameter::grad.
  void backward(NodeId loss) {
    if (loss >= nodes_.size()) {
      throw StructuralError("backward: unknown loss node");
    }
    const auto& lv = nodes_[loss].value;
    if (lv.rows != 1 || lv.cols != 1) {
      throw ContractViolation("backward: loss must be scalar");
    }
    for (auto& n : nodes_) {
      n.grad = Matrix<T>();
    }
    nodes_[loss].grad = Matrix<T>(1, 1, T{1});
    for (NodeId id = loss + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (n.grad.size() == 0) {
        continue;
      }
      for (NodeId in : n.inputs) {
        if (in >= id) {
          throw StructuralError("backward: cycle detected at node " + std::to_string(id));
        }
      }
      propagate(id);
    }
    for (auto& n : nodes_) {
      if (n.op == OpKind::parameter && n.grad.size() != 0) {
        auto& g = n.param->grad.data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += n.grad.data[i];
        }
      }
    }
  }

  static T logistic(T x) {
    if (x >= T{0}) {
      return T{1} / (T{1} + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T{1} + e);
  }

  static void softmax_row(std::span<T> row) {
    if (row.empty()) {
      return;
    }
    const T max_v = *std::max_element(row.begin(), row.end());
    T sum{0};
    for (auto& v : row) {
      v = std::exp(v - max_v);
      sum += v;
    }
    for (auto& v : row) {
      v /= sum;
    }
  }

  // Dense kernels, also used by inference code outside the graph.
  // C += A * B
  static void gemm_nn(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    const std::size_t m = B.cols;
    for (std::size_t i = 0; i < A.rows; ++i) {
      T* c = C.data.data() + i * m;
      const T* a = A.data.data() + i * A.cols;
      for (std::size_t k = 0; k < A.cols; ++k) {
        const T av = a[k];
        if (av == T{0}) {
          continue;
        }
        const T* b = B.data.data() + k * m;
        for (std::size_t j = 0; j < m; ++j) {
          c[j] += av * b[j];
        }
      }
    }
  }

  // C += A * B^T
  static void gemm_nt(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    const std::size_t k = A.cols;
    for (std::size_t i = 0; i < A.rows; ++i) {
      const T* a = A.data.data() + i * k;
      T* c = C.data.data() + i * C.cols;
      for (std::size_t j = 0; j < B.rows; ++j) {
        const T* b = B.data.data() + j * k;
        T acc{0};
        for (std::size_t p = 0; p < k; ++p) {
          acc += a[p] * b[p];
        }
        c[j] += acc;
      }
    }
  }

  // C += A^T * B
  static void gemm_tn(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    const std::size_t m = B.cols;
    for (std::size_t r = 0; r < A.rows; ++r) {
      const T* a = A.data.data() + r * A.cols;
      const T* b = B.data.data() + r * m;
      for (std::size_t i = 0; i < A.cols; ++i) {
        const T av = a[i];
        if (av == T{0}) {
          continue;
        }
        T* c = C.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          c[j] += av * b[j];
        }
      }
    }
  }

 private:
  NodeId push(ComputationNode<T>&& node) {
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  void check_inputs(std::initializer_list<NodeId> ids) const {
    for (NodeId id : ids) {
      if (id >= nodes_.size()) {
        throw StructuralError("graph input refers to a node that does not exist yet");
      }
    }
  }

  Matrix<T>& grad_of(NodeId id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = Matrix<T>(n.value.rows, n.value.cols);
    }
    return n.grad;
  }

  void propagate(NodeId id) {
    auto& n = nodes_[id];
    const Matrix<T>& g = n.grad;
    switch (n.op) {
      case OpKind::parameter:
      case OpKind::constant:
        break;
      case OpKind::matmul: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        const auto& A = nodes_[a].value;
        const auto& B = nodes_[b].value;
        if (n.transpose_b) {
          // C = A B^T: dA = G B, dB = G^T A
          gemm_nn(g, B, grad_of(a));
          gemm_tn(g, A, grad_of(b));
        } else {
          // C = A B: dA = G B^T, dB = A^T G
          gemm_nt(g, B, grad_of(a));
          gemm_tn(A, g, grad_of(b));
        }
        break;
      }
      case OpKind::concat: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        auto& ga = grad_of(a);
        auto& gb = grad_of(b);
        for (std::size_t r = 0; r < g.rows; ++r) {
          auto src = g.row(r);
          auto da = ga.row(r);
          auto db = gb.row(r);
          for (std::size_t c = 0; c < ga.cols; ++c) {
            da[c] += src[c];
          }
          for (std::size_t c = 0; c < gb.cols; ++c) {
            db[c] += src[ga.cols + c];
          }
        }
        break;
      }
      case OpKind::add: {
        for (NodeId in : n.inputs) {
          auto& gi = grad_of(in);
          for (std::size_t i = 0; i < g.data.size(); ++i) {
            gi.data[i] += g.data[i];
          }
        }
        break;
      }
      case OpKind::embedding: {
        auto& gt = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          auto dst = gt.row(static_cast<std::size_t>(n.ids[r]));
          auto src = g.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) {
            dst[c] += src[c];
          }
        }
        break;
      }
      case OpKind::softmax: {
        auto& gi = grad_of(n.inputs[0]);
        for (std::size_t r = 0; r < g.rows; ++r) {
          auto y = n.value.row(r);
          auto gy = g.row(r);
          T dot{0};
          for (std::size_t c = 0; c < y.size(); ++c) {
            dot += gy[c] * y[c];
          }
          auto dx = gi.row(r);
          for (std::size_t c = 0; c < y.size(); ++c) {
            dx[c] += y[c] * (gy[c] - dot);
          }
        }
        break;
      }
      case OpKind::log: {
        const auto& x = nodes_[n.inputs[0]].value;
        auto& gi = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          gi.data[i] += g.data[i] / x.data[i];
        }
        break;
      }
      case OpKind::sigmoid: {
        auto& gi = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const T y = n.value.data[i];
          gi.data[i] += g.data[i] * y * (T{1} - y);
        }
        break;
      }
      case OpKind::cross_entropy: {
        auto& gi = grad_of(n.inputs[0]);
        const T upstream = g.data[0];
        for (std::size_t r = 0; r < n.cache.rows; ++r) {
          auto p = n.cache.row(r);
          auto dx = gi.row(r);
          for (std::size_t c = 0; c < p.size(); ++c) {
            dx[c] += upstream * p[c];
          }
          dx[static_cast<std::size_t>(n.ids[r])] -= upstream;
        }
        break;
      }
      case OpKind::sum: {
        auto& gi = grad_of(n.inputs[0]);
        const T upstream = g.data[0];
        for (auto& v : gi.data) {
          v += upstream;
        }
        break;
      }
      case OpKind::scale: {
        auto& gi = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          gi.data[i] += n.factor * g.data[i];
        }
        break;
      }
    }
  }

  std::vector<ComputationNode<T>> nodes_;
  std::unordered_map<const Parameter<T>*, NodeId> bound_;
};

/// Replicates a 1 x n row into a rows x n matrix (explicit, no broadcasting).
template <typename T>
NodeId repeat_row(Graph<T>& g, NodeId row, std::size_t rows) {
  return g.matmul(g.constant(Matrix<T>(rows, 1, T{1})), row);
}

/// x W + 1 b, with W given as (in x out) and b as (1 x out).
template <typename T>
NodeId affine(Graph<T>& g, NodeId x, NodeId weight, NodeId bias) {
  const std::size_t rows = g.value(x).rows;
  return g.add(g.matmul(x, weight), repeat_row(g, bias, rows));
}

}  // namespace mash::nn
