#include "csclog/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csclog {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double scalar_of(Var v) {
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  return v.value()(0, 0);
}

void note(GradCheckReport& report, double analytic, double numeric, const std::string& label) {
  const double rel = relative_error(analytic, numeric);
  report.max_absolute_error = std::max(report.max_absolute_error, std::abs(analytic - numeric));
  if (rel > report.max_relative_error || report.entries_checked == 0) {
    report.max_relative_error = std::max(rel, report.max_relative_error);
    report.worst_entry = label;
  }
  ++report.entries_checked;
}

}  // namespace

GradCheckReport grad_check(const InputFunction& fn, const std::vector<Tensor>& inputs, double step) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.input(t));
    Var out = fn(tape, vars);
    scalar_of(out);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(tape.input(t));
    return scalar_of(fn(tape, vars));
  };

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].data()[i];
      probe[k].data()[i] = orig + step;
      const double plus = evaluate(probe);
      probe[k].data()[i] = orig - step;
      const double minus = evaluate(probe);
      probe[k].data()[i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      note(report, analytic[k].data()[i], numeric, "input" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

GradCheckReport grad_check_parameters(const ParameterFunction& fn, const std::vector<Parameter*>& params,
                                      double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = fn(tape);
    scalar_of(out);
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  for (Parameter* p : params) p->zero_grad();

  auto evaluate = [&]() {
    Tape tape;
    return scalar_of(fn(tape));
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + step;
      const double plus = evaluate();
      value.data()[i] = orig - step;
      const double minus = evaluate();
      value.data()[i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      note(report, analytic[k].data()[i], numeric, params[k]->name + "[" + std::to_string(i) + "]");
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace csclog
