#include "csclog/tensor.hpp"

#include <cmath>
#include <sstream>

namespace csclog {

void check_finite(const Tensor& t, std::string_view what) {
  if (!t.allFinite()) {
    throw NonFiniteError("non-finite value in " + std::string(what));
  }
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_leaves_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  } else if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    return Tensor::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("backward root belongs to another tape");
  const Tensor& rv = value(root.id);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ShapeError("backward root must be 1x1, got " + shape_string(rv));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(root.id)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace ops {
namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("vars recorded on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

// Adds `g` into the gradient of `id` if that node participates in backprop.
template <typename Expr>
void accumulate(Tape& t, int id, const Expr& g) {
  if (t.requires_grad(id)) t.grad_ref(id) += g;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_string(av) + " x " + shape_string(bv));
  }
  Tensor out = av * bv;
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    if (t.requires_grad(ai)) t.grad_ref(ai).noalias() += g * t.value(bi).transpose();
    if (t.requires_grad(bi)) t.grad_ref(bi).noalias() += t.value(ai).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value() + b.value();
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    accumulate(t, ai, g);
    accumulate(t, bi, g);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: " + shape_string(av) + " + " + shape_string(rv));
  }
  Tensor out = av.rowwise() + rv.row(0);
  return a.tape->record(std::move(out), {a.id, row.id}, [ai = a.id, ri = row.id](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    accumulate(t, ai, g);
    if (t.requires_grad(ri)) t.grad_ref(ri) += g.colwise().sum();
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value() - b.value();
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    accumulate(t, ai, g);
    if (t.requires_grad(bi)) t.grad_ref(bi) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    if (t.requires_grad(ai)) t.grad_ref(ai) += g.cwiseProduct(t.value(bi));
    if (t.requires_grad(bi)) t.grad_ref(bi) += g.cwiseProduct(t.value(ai));
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value() * s;
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, s](Tape& t, int self) {
    accumulate(t, ai, t.upstream(self) * s);
  });
}

Var transpose(Var a) {
  Tensor out = a.value().transpose();
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    accumulate(t, ai, t.upstream(self).transpose());
  });
}

Var relu(Var a) {
  Tensor out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    const Tensor& x = t.value(ai);
    Tensor mask = (x.array() > 0.0).cast<double>();
    accumulate(t, ai, t.upstream(self).cwiseProduct(mask));
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    const Tensor& y = t.value(self);
    Tensor dy = y.array() * (1.0 - y.array());
    accumulate(t, ai, t.upstream(self).cwiseProduct(dy));
  });
}

Var tanh(Var a) {
  Tensor out = a.value().array().tanh().matrix();
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    const Tensor& y = t.value(self);
    Tensor dy = 1.0 - y.array().square();
    accumulate(t, ai, t.upstream(self).cwiseProduct(dy));
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    auto e = (x.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    if (!t.requires_grad(ai)) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.upstream(self);
    Tensor& ga = t.grad_ref(ai);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Var normalize_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r) / x.row(r).sum();
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    if (!t.requires_grad(ai)) return;
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    const Tensor& g = t.upstream(self);
    Tensor& ga = t.grad_ref(ai);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double s = x.row(r).sum();
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += (g.row(r).array() - dot) / s;
    }
  });
}

Var cross_entropy(Var p, int target) {
  const Tensor& pv = p.value();
  if (pv.rows() != 1) throw ShapeError("cross_entropy expects a 1xN row, got " + shape_string(pv));
  if (target < 0 || target >= pv.cols()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside [0, " +
                            std::to_string(pv.cols()) + ")");
  }
  if ((pv.array() < 0.0).any() || std::abs(pv.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("cross_entropy: input is not a probability distribution");
  }
  Tensor out(1, 1);
  out(0, 0) = -std::log(pv(0, target));
  return p.tape->record(std::move(out), {p.id}, [pi = p.id, target](Tape& t, int self) {
    if (!t.requires_grad(pi)) return;
    const double g = t.upstream(self)(0, 0);
    t.grad_ref(pi)(0, target) += -g / t.value(pi)(0, target);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape* tape = parts.front().tape;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& v : parts) {
    if (v.tape != tape) throw std::logic_error("vars recorded on different tapes");
    if (v.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += v.cols();
    ids.push_back(v.id);
    widths.push_back(v.cols());
  }
  Tensor out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& v : parts) {
    out.middleCols(at, v.cols()) = v.value();
    at += v.cols();
  }
  return tape->record(std::move(out), ids, [ids, widths](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      accumulate(t, ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape* tape = parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& v : parts) {
    if (v.tape != tape) throw std::logic_error("vars recorded on different tapes");
    if (v.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += v.rows();
    ids.push_back(v.id);
    heights.push_back(v.rows());
  }
  Tensor out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& v : parts) {
    out.middleRows(at, v.rows()) = v.value();
    at += v.rows();
  }
  return tape->record(std::move(out), ids, [ids, heights](Tape& t, int self) {
    const Tensor& g = t.upstream(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      accumulate(t, ids[k], g.middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols out of range on " + shape_string(a.value()));
  }
  Tensor out = a.value().middleCols(begin, count);
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, begin, count](Tape& t, int self) {
    if (t.requires_grad(ai)) t.grad_ref(ai).middleCols(begin, count) += t.upstream(self);
  });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows out of range on " + shape_string(a.value()));
  }
  Tensor out = a.value().middleRows(begin, count);
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, begin, count](Tape& t, int self) {
    if (t.requires_grad(ai)) t.grad_ref(ai).middleRows(begin, count) += t.upstream(self);
  });
}

Var gather_rows(Var a, const std::vector<Eigen::Index>& rows) {
  const Tensor& av = a.value();
  Tensor out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= av.rows()) throw ShapeError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(k)) = av.row(rows[k]);
  }
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, rows](Tape& t, int self) {
    if (!t.requires_grad(ai)) return;
    const Tensor& g = t.upstream(self);
    Tensor& ga = t.grad_ref(ai);
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  const Eigen::Index n = av.rows();
  Tensor out = Tensor::Zero(1, av.cols());
  if (n > 0) out = av.colwise().sum() / static_cast<double>(n);
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, n](Tape& t, int self) {
    if (n == 0 || !t.requires_grad(ai)) return;
    const Tensor& g = t.upstream(self);
    t.grad_ref(ai).rowwise() += g.row(0) / static_cast<double>(n);
  });
}

Var sum_all(Var a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    if (t.requires_grad(ai)) t.grad_ref(ai).array() += t.upstream(self)(0, 0);
  });
}

Var scatter(Var values, const std::vector<Eigen::Index>& rows_idx, const std::vector<Eigen::Index>& cols_idx,
            Eigen::Index rows, Eigen::Index cols) {
  const Tensor& v = values.value();
  if (v.cols() != 1 || static_cast<std::size_t>(v.rows()) != rows_idx.size() || rows_idx.size() != cols_idx.size()) {
    throw ShapeError("scatter: values " + shape_string(v) + " vs " + std::to_string(rows_idx.size()) + " targets");
  }
  Tensor out = Tensor::Zero(rows, cols);
  for (std::size_t k = 0; k < rows_idx.size(); ++k) {
    if (rows_idx[k] < 0 || rows_idx[k] >= rows || cols_idx[k] < 0 || cols_idx[k] >= cols) {
      throw ShapeError("scatter target out of range");
    }
    out(rows_idx[k], cols_idx[k]) = v(static_cast<Eigen::Index>(k), 0);
  }
  return values.tape->record(std::move(out), {values.id}, [vi = values.id, rows_idx, cols_idx](Tape& t, int self) {
    if (!t.requires_grad(vi)) return;
    const Tensor& g = t.upstream(self);
    Tensor& gv = t.grad_ref(vi);
    for (std::size_t k = 0; k < rows_idx.size(); ++k) gv(static_cast<Eigen::Index>(k), 0) += g(rows_idx[k], cols_idx[k]);
  });
}

Var gcn_normalize(Var adjacency) {
  const Tensor& a = adjacency.value();
  if (a.rows() != a.cols()) throw ShapeError("gcn adjacency must be square, got " + shape_string(a));
  const Eigen::Index n = a.rows();
  Tensor m = a + Tensor::Identity(n, n);
  Eigen::VectorXd deg = m.rowwise().sum();
  if ((deg.array() <= 0.0).any()) throw std::invalid_argument("gcn adjacency has non-positive degree");
  Eigen::VectorXd dinv = deg.array().rsqrt();
  Tensor out = dinv.asDiagonal() * m * dinv.asDiagonal();
  return adjacency.tape->record(
      std::move(out), {adjacency.id}, [ai = adjacency.id, m, dinv, deg](Tape& t, int self) {
        if (!t.requires_grad(ai)) return;
        const Tensor& g = t.upstream(self);
        const Eigen::Index n = m.rows();
        Tensor gm = dinv.asDiagonal() * g * dinv.asDiagonal();
        // dinv_i enters as a left factor on row i and a right factor on column i.
        Tensor gm_m = g.cwiseProduct(m);
        Eigen::VectorXd gd = gm_m * dinv + gm_m.transpose() * dinv;
        Eigen::VectorXd gs = gd.array() * (-0.5) * dinv.array() / deg.array();
        for (Eigen::Index i = 0; i < n; ++i) gm.row(i).array() += gs(i);
        t.grad_ref(ai) += gm;
      });
}

}  // namespace ops

}  // namespace csclog
