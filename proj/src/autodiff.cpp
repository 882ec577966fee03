#include "fgcl/autodiff.hpp"

namespace fgcl::ad {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var root, const Matrix& seed) {
  if (seed.rows() != nodes_[root.id].value.rows() || seed.cols() != nodes_[root.id].value.cols()) {
    throw ContractViolation("Tape::backward: seed shape does not match root");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id].grad = seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward(*this, node.grad);
  }
}

void Tape::backward(Var root) {
  backward(root, Matrix::Ones(nodes_[root.id].value.rows(), nodes_[root.id].value.cols()));
}

namespace {

bool any_grad(Var a) { return a.tape->requires_grad(a.id); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractViolation("autodiff: operands recorded on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw ContractViolation("matmul: inner dimensions differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.value() * b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var operator+(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractViolation("add: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var operator-(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractViolation("sub: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id;
  return a.tape->record(s * a.value(), any_grad(a),
                        [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, s * g); });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ContractViolation("add_row: row shape mismatch");
  const std::size_t ia = a.id, ir = row.id;
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), any_grad(a, row), [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id;
  return a.tape->record(a.value().cwiseMax(0.0), any_grad(a), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var tanh(Var a) {
  const std::size_t ia = a.id;
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(out), any_grad(a), [ia, out_id](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(out_id);
    t.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var mul_rows(Var a, Var column) {
  check_same_tape(a, column);
  if (column.cols() != 1 || column.rows() != a.rows()) throw ContractViolation("mul_rows: column shape mismatch");
  const std::size_t ia = a.id, ic = column.id;
  Matrix out = column.value().col(0).asDiagonal() * a.value();
  return a.tape->record(std::move(out), any_grad(a, column), [ia, ic](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.value(ic).col(0).asDiagonal() * g);
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var gather_rows(Var a, std::vector<Eigen::Index> index) {
  const Matrix& src = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), src.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= src.rows()) throw ContractViolation("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = src.row(index[r]);
  }
  const std::size_t ia = a.id;
  const Eigen::Index src_rows = src.rows();
  return a.tape->record(std::move(out), any_grad(a),
                        [ia, src_rows, index = std::move(index)](Tape& t, const Matrix& g) {
                          Matrix back = Matrix::Zero(src_rows, g.cols());
                          for (std::size_t r = 0; r < index.size(); ++r)
                            back.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
                          t.accumulate(ia, back);
                        });
}

Var scatter_sum_rows(Var a, std::vector<Eigen::Index> target, Eigen::Index out_rows) {
  const Matrix& src = a.value();
  if (static_cast<Eigen::Index>(target.size()) != src.rows())
    throw ContractViolation("scatter_sum_rows: one target per input row required");
  Matrix out = Matrix::Zero(out_rows, src.cols());
  for (std::size_t r = 0; r < target.size(); ++r) {
    if (target[r] < 0 || target[r] >= out_rows) throw ContractViolation("scatter_sum_rows: target out of range");
    out.row(target[r]) += src.row(static_cast<Eigen::Index>(r));
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), any_grad(a), [ia, target = std::move(target)](Tape& t, const Matrix& g) {
    Matrix back(static_cast<Eigen::Index>(target.size()), g.cols());
    for (std::size_t r = 0; r < target.size(); ++r) back.row(static_cast<Eigen::Index>(r)) = g.row(target[r]);
    t.accumulate(ia, back);
  });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows()) throw ContractViolation("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const std::size_t ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.leftCols(ca));
    t.accumulate(ib, g.rightCols(cb));
  });
}

Var mean_rows(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index n = a.rows();
  if (n == 0) throw ContractViolation("mean_rows: empty input");
  Matrix out = a.value().colwise().mean();
  return a.tape->record(std::move(out), any_grad(a), [ia, n](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g / static_cast<double>(n)).replicate(n, 1));
  });
}

Var max_rows(Var a) {
  const Matrix& src = a.value();
  if (src.rows() == 0) throw ContractViolation("max_rows: empty input");
  Matrix out(1, src.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(src.cols()));
  for (Eigen::Index c = 0; c < src.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < src.rows(); ++r)
      if (src(r, c) > src(best, c)) best = r;
    argmax[static_cast<std::size_t>(c)] = best;
    out(0, c) = src(best, c);
  }
  const std::size_t ia = a.id;
  const Eigen::Index rows = src.rows();
  return a.tape->record(std::move(out), any_grad(a),
                        [ia, rows, argmax = std::move(argmax)](Tape& t, const Matrix& g) {
                          Matrix back = Matrix::Zero(rows, g.cols());
                          for (Eigen::Index c = 0; c < g.cols(); ++c) back(argmax[static_cast<std::size_t>(c)], c) = g(0, c);
                          t.accumulate(ia, back);
                        });
}

Var normalize(Var a) {
  const double norm = a.value().norm();
  if (norm == 0.0) throw ContractViolation("normalize: zero-norm input");
  const std::size_t ia = a.id;
  const std::size_t out_id = a.tape->size();
  return a.tape->record(a.value() / norm, any_grad(a), [ia, out_id, norm](Tape& t, const Matrix& g) {
    const Matrix& u = t.value(out_id);
    const double proj = (g.array() * u.array()).sum();
    t.accumulate(ia, (g - proj * u) / norm);
  });
}

}  // namespace fgcl::ad
