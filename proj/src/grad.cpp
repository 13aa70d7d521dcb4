#include "tsdf/grad.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace tsdf {

using Eigen::Index;

void Parameter::zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }

const Mat& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Mat& v = value();
  if (v.size() != 1) throw std::logic_error("Var::item on non-scalar");
  return v(0, 0);
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) { return constant(Mat::Constant(1, 1, value)); }

Var Tape::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.leaf = true;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  param_order_.push_back(id);
  return Var(this, id);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Mat value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw std::logic_error("operands recorded on different tapes");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, Mat g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw std::logic_error("gradient shape mismatch");
  if (n.grad.size() == 0)
    n.grad = std::move(g);
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) throw std::logic_error("backward(loss) requires a 1x1 output");
  accumulate(loss.id(), Mat::Ones(1, 1));
  sweep();
}

void Tape::backward(std::span<const Var> outputs, std::span<const Mat> seeds) {
  if (outputs.size() != seeds.size()) throw std::logic_error("one seed per output required");
  for (std::size_t i = 0; i < outputs.size(); ++i) accumulate(outputs[i].id(), seeds[i]);
  sweep();
}

void Tape::sweep() {
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    // Interior gradients are dead once propagated.
    if (!n.leaf) n.grad.resize(0, 0);
  }
}

void Tape::flush_param_grads() {
  for (int id : param_order_) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    Parameter& p = *n.param;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    p.grad += n.grad;
  }
}

const Mat* Tape::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  const Mat& g = nodes_[it->second].grad;
  return g.size() == 0 ? nullptr : &g;
}

// ---------------------------------------------------------------------------

namespace {

Index broadcast_dim(Index a, Index b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument("incompatible operand shapes");
}

const Mat& expand(const Mat& m, Index rows, Index cols, Mat& storage) {
  if (m.rows() == rows && m.cols() == cols) return m;
  storage = m.replicate(rows / m.rows(), cols / m.cols());
  return storage;
}

Mat reduce_to(Mat g, Index rows, Index cols) {
  if (rows == 1 && g.rows() != 1) g = g.colwise().sum().eval();
  if (cols == 1 && g.cols() != 1) g = g.rowwise().sum().eval();
  return g;
}

// fwd(A, B) -> out; ga/gb(g, A, B) -> gradient w.r.t. the expanded operand.
template <class Fwd, class GradA, class GradB>
Var binary(Var a, Var b, Fwd fwd, GradA ga, GradB gb) {
  Tape& t = a.tape();
  const Index rows = broadcast_dim(a.rows(), b.rows());
  const Index cols = broadcast_dim(a.cols(), b.cols());
  Mat sa, sb;
  Mat out = fwd(expand(a.value(), rows, cols, sa), expand(b.value(), rows, cols, sb));
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, rows, cols, ga, gb](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    Mat sa, sb;
    const Mat& A = expand(tp.value(ia), rows, cols, sa);
    const Mat& B = expand(tp.value(ib), rows, cols, sb);
    if (tp.requires_grad(ia))
      tp.accumulate(ia, reduce_to(ga(g, A, B), tp.value(ia).rows(), tp.value(ia).cols()));
    if (tp.requires_grad(ib))
      tp.accumulate(ib, reduce_to(gb(g, A, B), tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

// fwd(X) -> Y; grad(g, X, Y) -> gradient w.r.t. X.
template <class Fwd, class Grad>
Var unary_op(Var a, Fwd fwd, Grad grad) {
  Tape& t = a.tape();
  const int ia = a.id();
  Mat out = fwd(a.value());
  return t.record(std::move(out), {a}, [ia, grad](Tape& tp, int self) {
    tp.accumulate(ia, grad(tp.grad(self), tp.value(ia), tp.value(self)));
  });
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A + B; },
      [](const Mat& g, const Mat&, const Mat&) -> Mat { return g; },
      [](const Mat& g, const Mat&, const Mat&) -> Mat { return g; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A - B; },
      [](const Mat& g, const Mat&, const Mat&) -> Mat { return g; },
      [](const Mat& g, const Mat&, const Mat&) -> Mat { return -g; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A.cwiseProduct(B); },
      [](const Mat& g, const Mat&, const Mat& B) -> Mat { return g.cwiseProduct(B); },
      [](const Mat& g, const Mat& A, const Mat&) -> Mat { return g.cwiseProduct(A); });
}

Var div(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A.cwiseQuotient(B); },
      [](const Mat& g, const Mat&, const Mat& B) -> Mat { return g.cwiseQuotient(B); },
      [](const Mat& g, const Mat& A, const Mat& B) -> Mat {
        return (-g.array() * A.array() / B.array().square()).matrix();
      });
}

Var minimum(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A.cwiseMin(B); },
      [](const Mat& g, const Mat& A, const Mat& B) -> Mat {
        return (A.array() <= B.array()).select(g, 0.0);
      },
      [](const Mat& g, const Mat& A, const Mat& B) -> Mat {
        return (A.array() <= B.array()).select(0.0, g);
      });
}

Var maximum(Var a, Var b) {
  return binary(
      a, b, [](const Mat& A, const Mat& B) -> Mat { return A.cwiseMax(B); },
      [](const Mat& g, const Mat& A, const Mat& B) -> Mat {
        return (A.array() >= B.array()).select(g, 0.0);
      },
      [](const Mat& g, const Mat& A, const Mat& B) -> Mat {
        return (A.array() >= B.array()).select(0.0, g);
      });
}

Var neg(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return -x; },
      [](const Mat& g, const Mat&, const Mat&) -> Mat { return -g; });
}

Var exp(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.array().exp().matrix(); },
      [](const Mat& g, const Mat&, const Mat& y) -> Mat { return g.cwiseProduct(y); });
}

Var log(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.array().log().matrix(); },
      [](const Mat& g, const Mat& x, const Mat&) -> Mat { return g.cwiseQuotient(x); });
}

Var sqrt(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.array().sqrt().matrix(); },
      [](const Mat& g, const Mat&, const Mat& y) -> Mat {
        return (0.5 * g.array() / y.array()).matrix();
      });
}

Var tanh(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.array().tanh().matrix(); },
      [](const Mat& g, const Mat&, const Mat& y) -> Mat {
        return (g.array() * (1.0 - y.array().square())).matrix();
      });
}

Var sigmoid(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.unaryExpr(&sigmoid_scalar); },
      [](const Mat& g, const Mat&, const Mat& y) -> Mat {
        return (g.array() * y.array() * (1.0 - y.array())).matrix();
      });
}

Var softplus(Var a) {
  return unary_op(
      a,
      [](const Mat& x) -> Mat {
        return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
      },
      [](const Mat& g, const Mat& x, const Mat&) -> Mat {
        return g.cwiseProduct(x.unaryExpr(&sigmoid_scalar));
      });
}

Var relu(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.cwiseMax(0.0); },
      [](const Mat& g, const Mat& x, const Mat&) -> Mat { return (x.array() > 0.0).select(g, 0.0); });
}

Var abs(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.cwiseAbs(); },
      [](const Mat& g, const Mat& x, const Mat&) -> Mat {
        return g.cwiseProduct(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }));
      });
}

Var square(Var a) {
  return unary_op(
      a, [](const Mat& x) -> Mat { return x.array().square().matrix(); },
      [](const Mat& g, const Mat& x, const Mat&) -> Mat { return 2.0 * g.cwiseProduct(x); });
}

Var clamp(Var a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](const Mat& x) -> Mat { return x.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Mat& g, const Mat& x, const Mat&) -> Mat {
        return (x.array() >= lo && x.array() <= hi).select(g, 0.0);
      });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  Mat out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    throw std::invalid_argument("linear: shape mismatch");
  Tape& t = x.tape();
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Mat out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {x, w, b}, [ix, iw, ib](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    if (tp.requires_grad(ix)) {
      Mat gx(g.rows(), tp.value(iw).rows());
      gx.noalias() = g * tp.value(iw).transpose();
      tp.accumulate(ix, std::move(gx));
    }
    if (tp.requires_grad(iw)) {
      Mat gw(tp.value(iw).rows(), tp.value(iw).cols());
      gw.noalias() = tp.value(ix).transpose() * g;
      tp.accumulate(iw, std::move(gw));
    }
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var spmm(const SparseMat& a, Var x) {
  if (a.cols() != x.rows()) throw std::invalid_argument("spmm: shape mismatch");
  Tape& t = x.tape();
  auto op = std::make_shared<const SparseMat>(a);
  const int ix = x.id();
  Mat out = (*op) * x.value();
  return t.record(std::move(out), {x}, [op, ix](Tape& tp, int self) {
    tp.accumulate(ix, Mat(op->transpose() * tp.grad(self)));
  });
}

Var sum(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(Mat::Constant(1, 1, a.value().sum()), {a}, [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, Mat::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean of empty tensor");
  Tape& t = a.tape();
  const int ia = a.id();
  const double n = static_cast<double>(a.value().size());
  return t.record(Mat::Constant(1, 1, a.value().sum() / n), {a}, [ia, n](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, Mat::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0) / n));
  });
}

Var rowwise_sum(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().rowwise().sum(), {a}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self).replicate(1, tp.value(ia).cols()));
  });
}

Var group_sum(Var a, Index group) {
  if (group <= 0 || a.rows() % group != 0) throw std::invalid_argument("group_sum: bad group size");
  Tape& t = a.tape();
  const int ia = a.id();
  const Mat& x = a.value();
  const Index groups = x.rows() / group;
  Mat out = Mat::Zero(groups, x.cols());
  for (Index r = 0; r < groups; ++r) out.row(r) = x.middleRows(r * group, group).colwise().sum();
  return t.record(std::move(out), {a}, [ia, group](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    Mat gx(g.rows() * group, g.cols());
    for (Index r = 0; r < g.rows(); ++r) gx.middleRows(r * group, group) = g.row(r).replicate(group, 1);
    tp.accumulate(ia, std::move(gx));
  });
}

Var exclusive_cumsum(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      out(r, c) = acc;
      acc += x(r, c);
    }
  }
  return t.record(std::move(out), {a}, [ia](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    Mat gx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      double acc = 0.0;
      for (Index c = g.cols() - 1; c >= 0; --c) {
        gx(r, c) = acc;
        acc += g(r, c);
      }
    }
    tp.accumulate(ia, std::move(gx));
  });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().middleCols(start, count), {a}, [ia, start, count](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat gx = Mat::Zero(x.rows(), x.cols());
    gx.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, std::move(gx));
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  Tape& t = parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id(), c);
    c += p.cols();
  }
  return t.record(std::move(out), parts, [layout](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (auto [id, offset] : layout)
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(offset, tp.value(id).cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Tape& t = parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id(), r);
    r += p.rows();
  }
  return t.record(std::move(out), parts, [layout](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    for (auto [id, offset] : layout)
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(offset, tp.value(id).rows()));
  });
}

Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  Tape& t = a.tape();
  const int ia = a.id();
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return t.record(std::move(out), {a}, [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, Eigen::Map<const Mat>(tp.grad(self).data(), x.rows(), x.cols()));
  });
}

Var gather_rows(Var a, std::vector<int> index) {
  Tape& t = a.tape();
  const Mat& x = a.value();
  Mat out(static_cast<Index>(index.size()), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= x.rows()) throw std::out_of_range("gather_rows index");
    out.row(static_cast<Index>(k)) = x.row(index[k]);
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, index = std::move(index)](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& src = tp.value(ia);
    Mat gx = Mat::Zero(src.rows(), src.cols());
    for (std::size_t k = 0; k < index.size(); ++k) gx.row(index[k]) += g.row(static_cast<Index>(k));
    tp.accumulate(ia, std::move(gx));
  });
}

namespace {

struct Cell1 {
  Index i0;
  double f;
  bool inside;
};

Cell1 locate(double u, Index n) {
  const double hi = static_cast<double>(n - 1);
  Cell1 c;
  c.inside = u >= 0.0 && u <= hi;
  const double v = std::clamp(u, 0.0, hi);
  c.i0 = std::min(static_cast<Index>(std::floor(v)), n - 2);
  c.f = v - static_cast<double>(c.i0);
  return c;
}

}  // namespace

Var lerp_gather(Var table, Var coord) {
  const Mat& tab = table.value();
  const Mat& u = coord.value();
  if (u.cols() != 1) throw std::invalid_argument("lerp_gather: coord must be B x 1");
  if (tab.rows() < 2) throw std::invalid_argument("lerp_gather: table needs >= 2 rows");
  const Index n = tab.rows();
  Mat out(u.rows(), tab.cols());
  for (Index b = 0; b < u.rows(); ++b) {
    const Cell1 c = locate(u(b, 0), n);
    out.row(b) = (1.0 - c.f) * tab.row(c.i0) + c.f * tab.row(c.i0 + 1);
  }
  Tape& t = table.tape();
  const int it = table.id(), iu = coord.id();
  return t.record(std::move(out), {table, coord}, [it, iu, n](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& tab = tp.value(it);
    const Mat& u = tp.value(iu);
    const bool want_t = tp.requires_grad(it), want_u = tp.requires_grad(iu);
    Mat gt, gu;
    if (want_t) gt = Mat::Zero(tab.rows(), tab.cols());
    if (want_u) gu = Mat::Zero(u.rows(), 1);
    for (Index b = 0; b < u.rows(); ++b) {
      const Cell1 c = locate(u(b, 0), n);
      if (want_t) {
        gt.row(c.i0) += (1.0 - c.f) * g.row(b);
        gt.row(c.i0 + 1) += c.f * g.row(b);
      }
      if (want_u && c.inside) gu(b, 0) = g.row(b).dot(tab.row(c.i0 + 1) - tab.row(c.i0));
    }
    if (want_t) tp.accumulate(it, std::move(gt));
    if (want_u) tp.accumulate(iu, std::move(gu));
  });
}

Var bilerp_gather(Var table, Var coords, Index n) {
  const Mat& tab = table.value();
  const Mat& uv = coords.value();
  if (uv.cols() != 2) throw std::invalid_argument("bilerp_gather: coords must be B x 2");
  if (n < 2 || tab.rows() != n * n) throw std::invalid_argument("bilerp_gather: table must be (n*n) x R");
  Mat out(uv.rows(), tab.cols());
  for (Index b = 0; b < uv.rows(); ++b) {
    const Cell1 ci = locate(uv(b, 0), n), cj = locate(uv(b, 1), n);
    const Index r00 = ci.i0 * n + cj.i0;
    const Index r10 = r00 + n;
    out.row(b) = (1.0 - ci.f) * ((1.0 - cj.f) * tab.row(r00) + cj.f * tab.row(r00 + 1)) +
                 ci.f * ((1.0 - cj.f) * tab.row(r10) + cj.f * tab.row(r10 + 1));
  }
  Tape& t = table.tape();
  const int it = table.id(), iu = coords.id();
  return t.record(std::move(out), {table, coords}, [it, iu, n](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& tab = tp.value(it);
    const Mat& uv = tp.value(iu);
    const bool want_t = tp.requires_grad(it), want_u = tp.requires_grad(iu);
    Mat gt, gu;
    if (want_t) gt = Mat::Zero(tab.rows(), tab.cols());
    if (want_u) gu = Mat::Zero(uv.rows(), 2);
    for (Index b = 0; b < uv.rows(); ++b) {
      const Cell1 ci = locate(uv(b, 0), n), cj = locate(uv(b, 1), n);
      const Index r00 = ci.i0 * n + cj.i0;
      const Index r10 = r00 + n;
      if (want_t) {
        gt.row(r00) += (1.0 - ci.f) * (1.0 - cj.f) * g.row(b);
        gt.row(r00 + 1) += (1.0 - ci.f) * cj.f * g.row(b);
        gt.row(r10) += ci.f * (1.0 - cj.f) * g.row(b);
        gt.row(r10 + 1) += ci.f * cj.f * g.row(b);
      }
      if (want_u) {
        if (ci.inside)
          gu(b, 0) = g.row(b).dot((1.0 - cj.f) * (tab.row(r10) - tab.row(r00)) +
                                  cj.f * (tab.row(r10 + 1) - tab.row(r00 + 1)));
        if (cj.inside)
          gu(b, 1) = g.row(b).dot((1.0 - ci.f) * (tab.row(r00 + 1) - tab.row(r00)) +
                                  ci.f * (tab.row(r10 + 1) - tab.row(r10)));
      }
    }
    if (want_t) tp.accumulate(it, std::move(gt));
    if (want_u) tp.accumulate(iu, std::move(gu));
  });
}

Var operator+(Var a, double b) { return add(a, a.tape().constant(b)); }
Var operator+(double a, Var b) { return add(b.tape().constant(a), b); }
Var operator-(Var a, double b) { return sub(a, a.tape().constant(b)); }
Var operator-(double a, Var b) { return sub(b.tape().constant(a), b); }
Var operator*(Var a, double b) { return mul(a, a.tape().constant(b)); }
Var operator*(double a, Var b) { return mul(b.tape().constant(a), b); }
Var operator/(Var a, double b) { return mul(a, a.tape().constant(1.0 / b)); }
Var operator/(double a, Var b) { return div(b.tape().constant(a), b); }

}  // namespace tsdf
