#pragma once

// Reverse-mode differentiation over a recorded tape of dense-matrix operations.
//
// A Tape owns every intermediate value. Ops are free functions taking and returning Var
// handles; each op records a closure that pushes its output gradient to its inputs.
// Tapes are single-use and single-threaded: build, call backward() once, read leaf grads.

#include "fgcl/numcore.hpp"

#include <functional>
#include <vector>

namespace fgcl::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var variable(Matrix value) { return record(std::move(value), true, nullptr); }
  Var constant(Matrix value) { return record(std::move(value), false, nullptr); }
  Var record(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() root with respect to v; zeros if v was not reached.
  Matrix grad(Var v) const;

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }

  void backward(Var root, const Matrix& seed);
  /// Scalar root: seed 1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var scale(Var a, double s);
/// a + broadcast of a 1 x cols row over every row of a.
Var add_row(Var a, Var row);
Var relu(Var a);
Var tanh(Var a);
/// Row i of a multiplied by column(i, 0).
Var mul_rows(Var a, Var column);
Var gather_rows(Var a, std::vector<Eigen::Index> index);
/// out(target[r], :) += a(r, :), out has out_rows rows.
Var scatter_sum_rows(Var a, std::vector<Eigen::Index> target, Eigen::Index out_rows);
Var concat_cols(Var a, Var b);
/// 1 x cols column means.
Var mean_rows(Var a);
/// 1 x cols column maxima; ties resolved to the lowest row.
Var max_rows(Var a);
/// a / |a| (Frobenius). Caller guarantees |a| > 0.
Var normalize(Var a);
/// Affine map x W + b.
inline Var affine(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace fgcl::ad
