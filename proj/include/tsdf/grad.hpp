#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace tsdf {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A named leaf tensor owned by a model component. `grad` is accumulated by
/// Tape::flush_param_grads and consumed by the optimizer.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // decoupled weight decay applies

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Append-only reverse-mode tape. Nodes hold whole matrices (a batch of rays or
/// grid points per node), so the tape length stays independent of batch size.
///
/// Inputs always precede outputs, so a single reverse sweep visits every node
/// once. Parameter gradients are accumulated tape-locally and only written to
/// Parameter::grad by flush_param_grads(), which lets several tapes run on
/// different threads against the same parameters.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var constant(double value);
  /// Differentiable leaf not tied to a Parameter; read its gradient with grad().
  Var variable(Mat value);
  /// Leaf bound to `p`. Repeated calls with the same parameter return the same node.
  Var parameter(Parameter& p);

  /// Appends an operation node. `backward` is only stored (and later invoked)
  /// when at least one input requires a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Mat value, std::span<const Var> inputs, Backward backward);

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient of a node after backward(). Empty when no gradient reached it.
  const Mat& grad(int id) const { return nodes_[id].grad; }
  const Mat& grad(Var v) const { return nodes_[v.id()].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }

  /// Adds `g` into the gradient of node `id` (no-op if it does not require one).
  void accumulate(int id, Mat g);

  /// Reverse sweep seeded with d(loss)/d(loss) = 1; `loss` must be 1x1.
  void backward(Var loss);
  /// Reverse sweep with explicit output seeds (shapes must match the outputs).
  void backward(std::span<const Var> outputs, std::span<const Mat> seeds);

  /// Adds accumulated parameter gradients into Parameter::grad, in order of
  /// first use on this tape. Requires exclusive access to the parameters.
  void flush_param_grads();
  /// Tape-local gradient for `p` (empty if p never received a gradient).
  const Mat* param_grad(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::vector<int> inputs;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool leaf = false;
  };

  void sweep();

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  std::vector<int> param_order_;
};

// ---------------------------------------------------------------------------
// Primitive operations. Binary elementwise ops broadcast 1xC, Rx1 and 1x1
// operands against the other operand's shape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);

Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var relu(Var a);
Var abs(Var a);
Var square(Var a);
/// Clamps to [lo, hi]; the gradient is zero strictly outside the interval.
Var clamp(Var a, double lo, double hi);

/// Dense product a (m x k) * b (k x n).
Var matmul(Var a, Var b);
/// Fused x * W + b with x (B x in), W (in x out), b (1 x out).
Var linear(Var x, Var w, Var b);
/// Constant sparse operator applied on the left: A (m x n) * x (n x c).
Var spmm(const SparseMat& a, Var x);

Var sum(Var a);
Var mean(Var a);
/// Row sums, (R x C) -> (R x 1).
Var rowwise_sum(Var a);
/// Sums consecutive groups of `group` rows, (R x C) -> (R/group x C).
Var group_sum(Var a, Eigen::Index group);
/// Per-row exclusive prefix sum along columns.
Var exclusive_cumsum(Var a);

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var gather_rows(Var a, std::vector<int> index);

/// Linear interpolation into the rows of `table` (N x R) at continuous row
/// coordinates `coord` (B x 1, expected in [0, N-1]).
Var lerp_gather(Var table, Var coord);
/// Bilinear interpolation into `table` ((N*N) x R, row = i*N + j) at continuous
/// coordinates `coords` (B x 2 holding i, j in [0, N-1]).
Var bilerp_gather(Var table, Var coords, Eigen::Index n);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

}  // namespace tsdf
