#include "citerec/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace citerec::autodiff {

Matrix& Tape::grad(std::size_t i) {
  auto& node = nodes_[i];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var Tape::push(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), recording_ ? std::move(backward) : Backward()});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}); }

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  const Var v = push(p.value, [&p](Tape& t, std::size_t self) {
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad += t.grad(self);
  });
  bound_.emplace(&p, v.index());
  return v;
}

Var Tape::param(const Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  const Var v = constant(p.value);
  bound_.emplace(&p, v.index());
  return v;
}

Var Tape::gather_rows(Parameter& table, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = table.value.row(rows[i]);
  std::vector<int> idx(rows.begin(), rows.end());
  return push(std::move(out), [&table, idx = std::move(idx)](Tape& t, std::size_t self) {
    if (table.grad.size() == 0) table.grad = Matrix::Zero(table.value.rows(), table.value.cols());
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i) table.grad.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var Tape::gather_rows(const Parameter& table, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = table.value.row(rows[i]);
  return constant(std::move(out));
}

void Tape::backward(Var output) {
  if (!recording_) throw std::logic_error("backward on a tape that does not record gradients");
  if (output.value().size() != 1) throw std::invalid_argument("backward needs a scalar output");
  grad(output.index()).setOnes();
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  const auto ia = a.index(), ib = b.index();
  return t.push(a.value() * b.value(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad(ia).noalias() += g * t.value(ib).transpose();
    t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_transposed(Var a, Var b) {
  Tape& t = a.tape();
  const auto ia = a.index(), ib = b.index();
  return t.push(a.value() * b.value().transpose(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad(ia).noalias() += g * t.value(ib);
    t.grad(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var add(Var a, Var b) {
  Tape& t = a.tape();
  const auto ia = a.index(), ib = b.index();
  return t.push(a.value() + b.value(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ib) += g;
  });
}

Var add_row(Var a, Var row) {
  Tape& t = a.tape();
  const auto ia = a.index(), ir = row.index();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), [ia, ir](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ir) += g.colwise().sum();
  });
}

Var scale(Var a, double factor) {
  Tape& t = a.tape();
  const auto ia = a.index();
  return t.push(a.value() * factor, [ia, factor](Tape& t, std::size_t self) {
    t.grad(ia) += t.grad(self) * factor;
  });
}

Var add_scalar(Var a, double value) {
  Tape& t = a.tape();
  const auto ia = a.index();
  Matrix out = a.value().array() + value;
  return t.push(std::move(out), [ia](Tape& t, std::size_t self) {
    t.grad(ia) += t.grad(self);
  });
}

Var relu(Var a) {
  Tape& t = a.tape();
  const auto ia = a.index();
  Matrix out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(ia).array() += (t.value(ia).array() > 0.0).select(g.array(), 0.0);
  });
}

namespace {

Matrix softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

Var softmax_rows(Var a) {
  Tape& t = a.tape();
  const auto ia = a.index();
  return t.push(softmax_rows_value(a.value()), [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Index r = 0; r < y.rows(); ++r) {
      const double inner = y.row(r).dot(g.row(r));
      dx.row(r) = y.row(r).array() * (g.row(r).array() - inner);
    }
    t.grad(ia) += dx;
  });
}

Var softmax_cols(Var a) {
  Tape& t = a.tape();
  const auto ia = a.index();
  Matrix out = softmax_rows_value(a.value().transpose()).transpose();
  return t.push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Index c = 0; c < y.cols(); ++c) {
      const double inner = y.col(c).dot(g.col(c));
      dx.col(c) = y.col(c).array() * (g.col(c).array() - inner);
    }
    t.grad(ia) += dx;
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = x.tape();
  const auto ix = x.index(), ig = gain.index(), ib = bias.index();
  const Matrix& in = x.value();
  const Index n = in.rows(), d = in.cols();
  Matrix normalized(n, d);
  Eigen::VectorXd inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (in.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = normalized.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t.push(std::move(out), [ix, ig, ib, normalized, inv_std](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& gamma = t.value(ig);
    t.grad(ig) += (g.array() * normalized.array()).colwise().sum().matrix();
    t.grad(ib) += g.colwise().sum();
    Matrix dxhat = g.array().rowwise() * gamma.row(0).array();
    Matrix dx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      const double mean_d = dxhat.row(r).mean();
      const double mean_dx = dxhat.row(r).dot(normalized.row(r)) / static_cast<double>(g.cols());
      dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - normalized.row(r).array() * mean_dx);
    }
    t.grad(ix) += dx;
  });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape& t = a.tape();
  const auto ia = a.index();
  return t.push(a.value().middleCols(start, count), [ia, start, count](Tape& t, std::size_t self) {
    t.grad(ia).middleCols(start, count) += t.grad(self);
  });
}

Var concat_cols(std::span<const Var> parts) {
  assert(!parts.empty());
  Tape& t = parts.front().tape();
  Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Matrix out(parts.front().rows(), cols);
  std::vector<std::size_t> ids;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.index());
  }
  return t.push(std::move(out), [ids](Tape& t, std::size_t self) {
    Index at = 0;
    for (auto i : ids) {
      const Index c = t.value(i).cols();
      t.grad(i) += t.grad(self).middleCols(at, c);
      at += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  assert(!parts.empty());
  Tape& t = parts.front().tape();
  Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Matrix out(rows, parts.front().cols());
  std::vector<std::size_t> ids;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.index());
  }
  return t.push(std::move(out), [ids](Tape& t, std::size_t self) {
    Index at = 0;
    for (auto i : ids) {
      const Index r = t.value(i).rows();
      t.grad(i) += t.grad(self).middleRows(at, r);
      at += r;
    }
  });
}

Var l2_normalize(Var a) {
  Tape& t = a.tape();
  const auto ia = a.index();
  const double norm = a.value().norm();
  if (!(norm > 0.0)) throw std::domain_error("cannot normalize a zero vector");
  return t.push(a.value() / norm, [ia, norm](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const double inner = (y.array() * g.array()).sum();
    t.grad(ia) += (g - y * inner) / norm;
  });
}

Var dot(Var a, Var b) {
  Tape& t = a.tape();
  const auto ia = a.index(), ib = b.index();
  Matrix out(1, 1);
  out(0, 0) = (a.value().array() * b.value().array()).sum();
  return t.push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    t.grad(ia) += g * t.value(ib);
    t.grad(ib) += g * t.value(ia);
  });
}

Var mean(std::span<const Var> scalars) {
  assert(!scalars.empty());
  Tape& t = scalars.front().tape();
  Matrix out = Matrix::Zero(1, 1);
  std::vector<std::size_t> ids;
  for (const auto& s : scalars) {
    out(0, 0) += s.value()(0, 0);
    ids.push_back(s.index());
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  out *= inv;
  return t.push(std::move(out), [ids, inv](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) * inv;
    for (auto i : ids) t.grad(i)(0, 0) += g;
  });
}

Var head_pool(Var weights, Var values) {
  Tape& t = weights.tape();
  const auto iw = weights.index(), iv = values.index();
  const Matrix& w = weights.value();
  const Matrix& v = values.value();
  const Index heads = w.cols();
  const Index d = v.cols();
  if (d % heads != 0) throw std::invalid_argument("head_pool: width not divisible by heads");
  const Index dh = d / heads;
  Matrix out(1, d);
  for (Index j = 0; j < heads; ++j) {
    out.middleCols(j * dh, dh) = w.col(j).transpose() * v.middleCols(j * dh, dh);
  }
  return t.push(std::move(out), [iw, iv, heads, dh](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& w = t.value(iw);
    const Matrix& v = t.value(iv);
    Matrix& gw = t.grad(iw);
    Matrix& gv = t.grad(iv);
    for (Index j = 0; j < heads; ++j) {
      const auto gj = g.middleCols(j * dh, dh);
      gw.col(j).noalias() += v.middleCols(j * dh, dh) * gj.transpose();
      gv.middleCols(j * dh, dh).noalias() += w.col(j) * gj;
    }
  });
}

}  // namespace citerec::autodiff
