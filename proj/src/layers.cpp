#include "csclog/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace csclog {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "identity";
}

Var apply_activation(Var x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return ops::relu(x);
    case Activation::sigmoid: return ops::sigmoid(x);
    case Activation::tanh: return ops::tanh(x);
    case Activation::softmax: return ops::softmax_rows(x);
  }
  return x;
}

void xavier_uniform(Tensor& t, Rng& rng) {
  const double fan = static_cast<double>(t.rows() + t.cols());
  if (fan == 0) return;
  const double bound = std::sqrt(6.0 / fan);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
}

Var dropout(Var x, double rate, Rng* rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  if (rng == nullptr) throw std::invalid_argument("dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : 0.0;
  return ops::mul(x, x.tape->constant(std::move(mask)));
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", Tensor::Zero(in, out)), bias(name + ".bias", Tensor::Zero(1, out)) {}

Var Linear::apply(Tape& tape, Var x) {
  if (x.cols() != weight.value.rows()) {
    throw ShapeError(weight.name + ": input " + shape_string(x.value()) + " vs weight " +
                     shape_string(weight.value));
  }
  return ops::add_row(ops::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

Mlp::Mlp(const std::string& name, const std::vector<Eigen::Index>& widths,
         const std::vector<Activation>& acts)
    : activations(acts) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1) {
    throw std::invalid_argument("Mlp " + name + ": need k+1 widths for k activations");
  }
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1]);
  }
}

Var Mlp::apply(Tape& tape, Var x, const DropoutContext* drop) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = apply_activation(layers[i].apply(tape, x), activations[i]);
    if (drop != nullptr && activations[i] != Activation::softmax) {
      x = dropout(x, drop->rate, drop->rng, drop->training);
    }
  }
  return x;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Lstm::Lstm(const std::string& name, Eigen::Index input_size, Eigen::Index hidden_size, int num_layers) {
  if (num_layers < 1) throw std::invalid_argument("Lstm needs at least one layer");
  for (int l = 0; l < num_layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    const Eigen::Index in = l == 0 ? input_size : hidden_size;
    layers.push_back(Layer{Parameter(p + ".w_input", Tensor::Zero(in, 4 * hidden_size)),
                           Parameter(p + ".w_hidden", Tensor::Zero(hidden_size, 4 * hidden_size)),
                           Parameter(p + ".bias", Tensor::Zero(1, 4 * hidden_size))});
  }
}

Var Lstm::apply(Tape& tape, Var x) {
  const Eigen::Index h = hidden_size();
  if (x.cols() != input_size()) {
    throw ShapeError("lstm: input " + shape_string(x.value()) + " expects " +
                     std::to_string(input_size()) + " columns");
  }
  const Eigen::Index steps = x.rows();
  if (steps == 0) return tape.constant(Tensor::Zero(1, h));

  Var seq = x;
  Var last{};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer& layer = layers[l];
    Var w_hidden = tape.parameter(layer.w_hidden);
    Var projected = ops::add_row(ops::matmul(seq, tape.parameter(layer.w_input)), tape.parameter(layer.bias));
    Var hidden{};
    Var cell{};
    std::vector<Var> outputs;
    const bool keep_sequence = l + 1 < layers.size();
    for (Eigen::Index t = 0; t < steps; ++t) {
      Var z = ops::slice_rows(projected, t, 1);
      if (t > 0) z = ops::add(z, ops::matmul(hidden, w_hidden));
      Var in_gate = ops::sigmoid(ops::slice_cols(z, 0, h));
      Var forget_gate = ops::sigmoid(ops::slice_cols(z, h, h));
      Var candidate = ops::tanh(ops::slice_cols(z, 2 * h, h));
      Var out_gate = ops::sigmoid(ops::slice_cols(z, 3 * h, h));
      Var fresh = ops::mul(in_gate, candidate);
      cell = t == 0 ? fresh : ops::add(ops::mul(forget_gate, cell), fresh);
      hidden = ops::mul(out_gate, ops::tanh(cell));
      if (keep_sequence) outputs.push_back(hidden);
    }
    last = hidden;
    if (keep_sequence) seq = ops::concat_rows(outputs);
  }
  return last;
}

std::vector<Parameter*> Lstm::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers) {
    out.push_back(&l.w_input);
    out.push_back(&l.w_hidden);
    out.push_back(&l.bias);
  }
  return out;
}

GcnLayer::GcnLayer(const std::string& name, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", Tensor::Zero(in, out)) {}

Var GcnLayer::apply(Tape& tape, Var x, Var normalized) {
  return ops::matmul(ops::matmul(normalized, x), tape.parameter(weight));
}

Var gcn_layer(Var x, Var adjacency, Var weight) {
  if (adjacency.rows() != x.rows()) {
    throw ShapeError("gcn: adjacency " + shape_string(adjacency.value()) + " vs features " +
                     shape_string(x.value()));
  }
  return ops::matmul(ops::matmul(ops::gcn_normalize(adjacency), x), weight);
}

ConvScalar::ConvScalar(const std::string& name, Eigen::Index length)
    : kernel(name + ".kernel", Tensor::Zero(length, 1)), bias(name + ".bias", Tensor::Zero(1, 1)) {}

Var ConvScalar::apply(Tape& tape, Var x) {
  if (x.rows() != 1 || x.cols() != kernel.value.rows()) {
    throw ShapeError("conv_scalar: input " + shape_string(x.value()) + " vs kernel length " +
                     std::to_string(kernel.value.rows()));
  }
  return ops::add(ops::matmul(x, tape.parameter(kernel)), tape.parameter(bias));
}

Var ConvScalar::apply_rows(Tape& tape, Var x) {
  if (x.cols() != kernel.value.rows()) {
    throw ShapeError("conv_scalar: input " + shape_string(x.value()) + " vs kernel length " +
                     std::to_string(kernel.value.rows()));
  }
  return ops::add_row(ops::matmul(x, tape.parameter(kernel)), tape.parameter(bias));
}

}  // namespace csclog
