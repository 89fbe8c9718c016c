#pragma once

#include "csclog/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace csclog {

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t entries_checked = 0;
  /// "<input or parameter name>[index]" of the worst entry.
  std::string worst_entry;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

/// Relative error used by the checks: |a - n| / max(|a|, |n|, floor).
/// The floor keeps near-zero gradients from amplifying finite-difference noise.
double relative_error(double analytic, double numeric, double floor = 1e-3);

/// Scalar-valued function of raw inputs recorded on a fresh tape.
using InputFunction = std::function<Var(Tape&, const std::vector<Var>&)>;
/// Scalar-valued function of parameters already bound by the caller.
using ParameterFunction = std::function<Var(Tape&)>;

/// Compares backprop gradients w.r.t. `inputs` to central differences.
GradCheckReport grad_check(const InputFunction& fn, const std::vector<Tensor>& inputs,
                           double step = 1e-4);

/// Same check over the entries of `params`, which `fn` must read via Tape::parameter.
/// Parameter gradients are zeroed before and after.
GradCheckReport grad_check_parameters(const ParameterFunction& fn, const std::vector<Parameter*>& params,
                                      double step = 1e-4);

}  // namespace csclog
