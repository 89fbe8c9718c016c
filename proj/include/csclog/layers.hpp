#pragma once

#include "csclog/rng.hpp"
#include "csclog/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace csclog {

enum class Activation { identity, relu, sigmoid, tanh, softmax };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
Var apply_activation(Var x, Activation a);

/// Xavier/Glorot uniform fill: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor& t, Rng& rng);

/// Inverted dropout. Training: each entry zeroed with probability `rate`,
/// survivors scaled by 1/(1-rate). Inference: identity. `rate` in [0,1).
Var dropout(Var x, double rate, Rng* rng, bool training);

struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool training = false;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out);

  Var apply(Tape& tape, Var x);
  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

/// Stack of affine layers, each followed by its activation.
///
/// When a DropoutContext is given, dropout is applied to the output of every
/// layer whose activation is not softmax.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<Eigen::Index>& widths,
      const std::vector<Activation>& activations);

  Var apply(Tape& tape, Var x, const DropoutContext* drop = nullptr);
  std::vector<Parameter*> parameters();

  std::vector<Linear> layers;
  std::vector<Activation> activations;
};

/// Multi-layer LSTM returning the final hidden state of the top layer.
/// Gate column order in the fused weights is input, forget, cell, output.
class Lstm {
 public:
  struct Layer {
    Parameter w_input;   // in x 4h
    Parameter w_hidden;  // h x 4h
    Parameter bias;      // 1 x 4h
  };

  Lstm() = default;
  Lstm(const std::string& name, Eigen::Index input_size, Eigen::Index hidden_size, int num_layers);

  /// `x` is N x input_size. N = 0 yields a 1 x hidden zero row.
  Var apply(Tape& tape, Var x);
  std::vector<Parameter*> parameters();

  Eigen::Index input_size() const { return layers.empty() ? 0 : layers.front().w_input.value.rows(); }
  Eigen::Index hidden_size() const { return layers.empty() ? 0 : layers.front().w_hidden.value.rows(); }

  std::vector<Layer> layers;
};

/// One graph convolution: normalized_adjacency * X * W.
class GcnLayer {
 public:
  GcnLayer() = default;
  GcnLayer(const std::string& name, Eigen::Index in, Eigen::Index out);

  /// `normalized` must already be D^{-1/2}(A+I)D^{-1/2}.
  Var apply(Tape& tape, Var x, Var normalized);

  Parameter weight;
};

/// Normalizes `adjacency` with self loops and applies `weight`. No activation.
Var gcn_layer(Var x, Var adjacency, Var weight);

/// Full-width 1-D convolution: one scalar = kernel . x + bias.
class ConvScalar {
 public:
  ConvScalar() = default;
  ConvScalar(const std::string& name, Eigen::Index length);

  /// `x` is 1 x length; result is 1 x 1.
  Var apply(Tape& tape, Var x);
  /// Row-wise: `x` is n x length; result is n x 1.
  Var apply_rows(Tape& tape, Var x);

  Parameter kernel;  // length x 1
  Parameter bias;    // 1 x 1
};

}  // namespace csclog
