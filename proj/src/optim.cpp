#include "csclog/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace csclog {

void adam_update(Tensor& param, const Tensor& grad, Tensor& first_moment, Tensor& second_moment,
                 const AdamConfig& config, long t) {
  if (t < 1) throw std::invalid_argument("adam step counter must be >= 1");
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw ShapeError("adam: gradient " + shape_string(grad) + " vs parameter " + shape_string(param));
  }
  check_finite(grad, "adam gradient");
  if (config.weight_decay != 0.0) param *= (1.0 - config.lr * config.weight_decay);
  first_moment = config.beta1 * first_moment + (1.0 - config.beta1) * grad;
  second_moment = config.beta2 * second_moment + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  param.array() -= config.lr * (first_moment.array() / c1) /
                   ((second_moment.array() / c2).sqrt() + config.eps);
}

void Adam::step(const std::vector<Parameter*>& params) {
  if (first_moment_.empty()) {
    for (const Parameter* p : params) {
      first_moment_.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      second_moment_.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (params.size() != first_moment_.size()) {
    throw std::logic_error("adam: parameter list changed between steps");
  }
  // Validate every gradient before touching any parameter.
  for (const Parameter* p : params) check_finite(p->grad, "gradient of " + p->name);
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i]->value, params[i]->grad, first_moment_[i], second_moment_[i], config_, step_);
  }
}

}  // namespace csclog
