#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace citerec::autodiff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// A trainable tensor. `grad` is sized lazily by the first backward pass
/// that touches it.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() {
    if (grad.size() != 0) grad.setZero();
  }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Records a computation and replays it backwards. Nodes are appended in
/// evaluation order, so reverse order is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

  Var constant(Matrix value);
  /// Each parameter is recorded once per tape; later uses share the node.
  Var param(Parameter& p);
  /// Frozen use of a parameter: no gradient flows back to it.
  Var param(const Parameter& p);
  /// Rows of `table` selected by `rows`, stacked. Gradient is scattered back.
  Var gather_rows(Parameter& table, std::span<const int> rows);
  Var gather_rows(const Parameter& table, std::span<const int> rows);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output);

  bool recording() const { return recording_; }
  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  Matrix& grad(std::size_t i);
  Var push(Matrix value, Backward backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
  };
  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

inline const Matrix& Var::value() const { return tape_->value(index_); }

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_transposed(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x cols row to every row of `a`.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var relu(Var a);
/// max(0, x), elementwise; same as relu, named for loss code.
inline Var hinge(Var a) { return relu(a); }
Var softmax_rows(Var a);
/// Softmax down each column (normalizes over rows).
Var softmax_cols(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var slice_cols(Var a, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Scales a row vector to unit L2 norm.
Var l2_normalize(Var a);
/// Row-vector inner product, 1x1.
Var dot(Var a, Var b);
/// Mean of 1x1 vars, 1x1.
Var mean(std::span<const Var> scalars);
/// Multi-head attention pooling. `weights` is n x heads (each column sums to
/// one), `values` is n x d with head j owning columns [j*d/heads, (j+1)*d/heads).
/// Returns 1 x d: head j's slice is sum_k weights(k, j) * values(k, slice_j).
Var head_pool(Var weights, Var values);

}  // namespace citerec::autodiff
