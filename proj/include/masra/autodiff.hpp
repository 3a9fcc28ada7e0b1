#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "masra/errors.hpp"
#include "masra/param_store.hpp"

namespace masra {

class Graph;

/// Handle to a node on a Graph tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense double matrices.
///
/// Nodes are appended in evaluation order, so reverse creation order is a
/// valid topological order for the backward sweep. The parameter store is
/// only read; gradients for parameters are kept inside the graph and handed
/// out by `param_grads()`, which lets several graphs share one store.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(const ParamStore* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  /// Leaf bound to a stored parameter. Non-trainable parameters become
  /// constants. Repeated lookups of the same name share one node.
  Var param(const std::string& name);

  /// Appends a node whose parents are `parents`. `fn` is dropped when no
  /// parent requires a gradient.
  Var emit(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var emit(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  /// Runs the backward sweep from a 1x1 node.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Gradient per parameter name, summed over all uses on this tape.
  std::map<std::string, Matrix> param_grads() const;

  const ParamStore* params() const { return params_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
    const std::string* param_name = nullptr;
  };
  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_nodes_;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

// Differentiable operations. All operate on 2-D matrices; "row" vectors are
// 1xN matrices.
namespace ops {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Elementwise a / b.
Var divide(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Adds a 1xN row to every row of a.
Var add_row(Var a, Var row);
/// Adds an Mx1 column to every column of a.
Var add_col(Var a, Var col);
Var relu(Var a);
Var sigmoid(Var a);
Var log(Var a, double floor = 1e-12);
Var abs(Var a);
Var square(Var a);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// x_i / max(||x_i||, eps) per row.
Var normalize_rows(Var a, double eps = 1e-8);
Var mean_rows(Var a);
Var sum(Var a);
Var mean(Var a);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var gather_rows(Var a, const std::vector<int>& rows);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var element(Var a, Eigen::Index r, Eigen::Index c);
Var stop_gradient(Var a);
/// Zero-padded 3x3 convolution. Input stacks `in_channels` HxW planes
/// vertically, weights are out_channels x (in_channels*9) with taps in
/// row-major (dy, dx) order, bias is out_channels x 1.
Var conv3x3(Var input, Var weight, Var bias, int in_channels);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, double s) { return ops::scale(a, s); }
inline Var operator*(double s, Var a) { return ops::scale(a, s); }

}  // namespace masra
