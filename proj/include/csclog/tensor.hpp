#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csclog {

/// Dense row-major 64-bit matrix. Every tensor in the model is rank <= 2;
/// vectors are 1xN rows.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws NonFiniteError naming `what` if any entry is NaN or infinite.
void check_finite(const Tensor& t, std::string_view what);

std::string shape_string(const Tensor& t);

/// A named learnable tensor and its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::Zero(value.rows(), value.cols())) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode recording of a single forward pass.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for back-propagation. A tape is meant to be
/// short-lived: build one per sample, call backward() once, discard.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (used by gradient checks on raw inputs).
  Var input(Tensor value);
  /// Leaf bound to a Parameter; backward() adds into `p.grad`. Repeated calls
  /// for the same parameter return the same leaf.
  Var parameter(Parameter& p);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of the last backward() root w.r.t. node `id` (zeros if none flowed).
  Tensor grad(Var v) const;

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to all leaves.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, std::vector<int> parents, BackwardFn fn);
  const Tensor& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Tensor& grad_ref(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_leaves_;
};

namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
/// Row-wise softmax, max-shifted.
Var softmax_rows(Var a);
/// Row-wise division by the row sum.
Var normalize_rows(Var a);

/// -sum y_i ln p_i for a one-hot y selecting `target`; `p` must be a 1xN distribution.
Var cross_entropy(Var p, int target);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, const std::vector<Eigen::Index>& rows);
/// Mean over rows (1 x m). An empty input yields a 1 x m zero row.
Var mean_rows(Var a);
Var sum_all(Var a);

/// rows x cols zero matrix with out(rows_idx[k], cols_idx[k]) = values(k, 0).
/// Target cells must be distinct.
Var scatter(Var values, const std::vector<Eigen::Index>& rows_idx, const std::vector<Eigen::Index>& cols_idx,
            Eigen::Index rows, Eigen::Index cols);

/// D^{-1/2} (A + I) D^{-1/2}, D = row-sum degree of (A + I).
Var gcn_normalize(Var adjacency);

}  // namespace ops

}  // namespace csclog
