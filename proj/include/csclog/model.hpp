#pragma once

#include "csclog/dataset.hpp"
#include "csclog/features.hpp"
#include "csclog/layers.hpp"
#include "csclog/tensor.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace csclog {

struct Ablation {
  bool ic_off = false;    // correlation weights fixed to 1
  bool lstm_off = false;  // sequence embedding = mean of feature embeddings
  bool sem_off = false;   // no semantic features
  bool time_off = false;  // no temporal features

  bool any() const { return ic_off || lstm_off || sem_off || time_off; }
  /// "full", "wo_ic", "wo_lstm", "wo_sem", "wo_time", or a "+"-joined mix.
  std::string name() const;
  static Ablation from_variant(const std::string& variant);
};

struct ModelConfig {
  int num_templates = 0;   // N_event
  int num_components = 0;  // N_c
  int semantic_dim = 768;
  int embed_dim = 64;   // d
  int hidden_dim = 64;  // d'
  double alpha_emb = 0.8;
  double dropout = 0.1;
  double gamma = 0.9;
  int lstm_layers = 2;
  int gcn_layers = 2;
  Ablation ablation;

  /// d_sem = round(alpha_emb * d) and d_tim = d - d_sem; a disabled feature
  /// gets width 0 and the other takes all of d.
  int semantic_width() const;
  int temporal_width() const;
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Global per-component attention, smoothed across training batches.
struct AttentionState {
  Eigen::RowVectorXd beta;
  long long iteration = 0;

  static AttentionState uniform(int num_components);
};

struct SubsequenceSet {
  /// Per component: window row indices in order. Empty lists are kept.
  std::vector<std::vector<int>> members;
  /// Messages whose component is outside the set (dropped from grouping).
  int dropped = 0;
};

SubsequenceSet extract_subsequences(const std::vector<ParsedMessage>& window, int num_components);

/// Everything the network reads for one window.
struct WindowFeatures {
  Tensor semantic;  // N x semantic_dim
  Tensor temporal;  // N x 1, window-local origin
  SubsequenceSet subsequences;
  std::vector<Tensor> subsequence_temporal;  // per component, subsequence-local origin
};

WindowFeatures featurize(const std::vector<ParsedMessage>& window, const SemanticTable& table, int num_components);

class Model {
 public:
  struct Embedded {
    Var window;                     // N x d
    std::vector<Var> subsequences;  // per component, N_j x d
  };
  struct Fused {
    Var x_att;     // 1 x d'
    Var beta_raw;  // 1 x N_c, softmax scores before smoothing
    Var beta;      // 1 x N_c
  };
  struct Output {
    Var probabilities;     // 1 x N_event
    Var logits;            // 1 x N_event
    Var classifier_input;  // 1 x 2d'
    Var x_rel;             // N_edge x 1
    Var beta_raw;
  };

  Model() = default;
  explicit Model(ModelConfig config);

  /// Xavier uniform for weight matrices and u_att, zero biases.
  void init(Rng& rng);
  /// Stable order; names are unique.
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();

  Embedded feature_embed(Tape& tape, const WindowFeatures& f, const DropoutContext* drop = nullptr);
  /// x' (1 x d') and X_c (N_c x d').
  std::pair<Var, Var> encode_all(Tape& tape, const Embedded& e);
  /// One weight per ordered pair (i, j), i != j, in row-major pair order.
  Var correlation_weights(Tape& tape, Var x_c);
  Var propagate(Tape& tape, Var x_c, Var x_rel);
  Fused fuse(Tape& tape, Var x_m, const AttentionState& state);
  Var predict_logits(Tape& tape, Var x_seq, Var x_att, const DropoutContext* drop = nullptr);

  Output forward(Tape& tape, const WindowFeatures& f, const AttentionState& state,
                 const DropoutContext* drop = nullptr);
  /// Inference convenience: probabilities as a row vector.
  Eigen::RowVectorXd predict(const WindowFeatures& f, const AttentionState& state);

  /// Blends a batch-mean raw attention into `state` and renormalizes.
  void update_attention(AttentionState& state, const Eigen::RowVectorXd& mean_beta_raw) const;

  const ModelConfig& config() const { return config_; }

  Mlp phi_sem;
  Mlp phi_time;
  Lstm lstm;
  Mlp phi_edge;
  ConvScalar conv;
  std::vector<GcnLayer> gcn;
  Parameter u_att;  // 1 x d'
  Mlp phi_out;

 private:
  Var embed_rows(Tape& tape, Var semantic_rows, const Tensor& temporal, const DropoutContext* drop);

  ModelConfig config_;
};

/// Pair list matching correlation_weights' row order.
std::vector<std::pair<int, int>> ordered_pairs(int num_components);

}  // namespace csclog
