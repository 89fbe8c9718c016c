#include "csclog/model.hpp"

#include "csclog/errors.hpp"

#include <cmath>
#include <sstream>

namespace csclog {

std::string Ablation::name() const {
  std::vector<std::string> parts;
  if (ic_off) parts.push_back("wo_ic");
  if (lstm_off) parts.push_back("wo_lstm");
  if (sem_off) parts.push_back("wo_sem");
  if (time_off) parts.push_back("wo_time");
  if (parts.empty()) return "full";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

Ablation Ablation::from_variant(const std::string& variant) {
  Ablation a;
  std::istringstream in(variant);
  std::string part;
  while (std::getline(in, part, '+')) {
    if (part == "full") continue;
    if (part == "wo_ic" || part == "w/o IC") a.ic_off = true;
    else if (part == "wo_lstm" || part == "w/o LSTM") a.lstm_off = true;
    else if (part == "wo_sem" || part == "w/o SEM") a.sem_off = true;
    else if (part == "wo_time" || part == "w/o TIME") a.time_off = true;
    else throw ConfigError("unknown ablation variant '" + part + "'");
  }
  return a;
}

int ModelConfig::semantic_width() const {
  if (ablation.sem_off) return 0;
  if (ablation.time_off) return embed_dim;
  return static_cast<int>(std::lround(alpha_emb * embed_dim));
}

int ModelConfig::temporal_width() const {
  if (ablation.time_off) return 0;
  return embed_dim - semantic_width();
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model: " + m); };
  if (num_templates < 1) fail("no templates (N_event = 0)");
  if (num_components < 1) fail("no components");
  if (semantic_dim < 1) fail("semantic_dim must be positive");
  if (embed_dim < 1 || hidden_dim < 1) fail("embedding and hidden sizes must be positive");
  if (!(alpha_emb >= 0.0 && alpha_emb <= 1.0)) fail("alpha_emb must be in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must be in [0, 1)");
  if (lstm_layers < 1 || gcn_layers < 1) fail("layer counts must be positive");
  if (ablation.sem_off && ablation.time_off) fail("cannot disable both semantic and temporal features");
  if (!ablation.sem_off && semantic_width() == 0) fail("semantic width rounds to 0; raise alpha_emb or d");
  if (!ablation.time_off && temporal_width() == 0) fail("temporal width is 0; lower alpha_emb or raise d");
  if (ablation.lstm_off && embed_dim != hidden_dim) fail("the mean-embedding variant needs d == d'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"num_templates", c.num_templates},
          {"num_components", c.num_components},
          {"semantic_dim", c.semantic_dim},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"alpha_emb", c.alpha_emb},
          {"dropout", c.dropout},
          {"gamma", c.gamma},
          {"lstm_layers", c.lstm_layers},
          {"gcn_layers", c.gcn_layers},
          {"ablation",
           {{"ic_off", c.ablation.ic_off},
            {"lstm_off", c.ablation.lstm_off},
            {"sem_off", c.ablation.sem_off},
            {"time_off", c.ablation.time_off}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_templates = j.at("num_templates").get<int>();
  c.num_components = j.at("num_components").get<int>();
  c.semantic_dim = j.at("semantic_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.alpha_emb = j.at("alpha_emb").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.gcn_layers = j.at("gcn_layers").get<int>();
  const auto& a = j.at("ablation");
  c.ablation.ic_off = a.at("ic_off").get<bool>();
  c.ablation.lstm_off = a.at("lstm_off").get<bool>();
  c.ablation.sem_off = a.at("sem_off").get<bool>();
  c.ablation.time_off = a.at("time_off").get<bool>();
  return c;
}

AttentionState AttentionState::uniform(int num_components) {
  AttentionState s;
  s.beta = Eigen::RowVectorXd::Constant(num_components, 1.0 / num_components);
  return s;
}

SubsequenceSet extract_subsequences(const std::vector<ParsedMessage>& window, int num_components) {
  SubsequenceSet out;
  out.members.resize(static_cast<std::size_t>(num_components));
  for (std::size_t i = 0; i < window.size(); ++i) {
    const int c = window[i].component;
    if (c < 0 || c >= num_components) {
      if (window[i].template_id != kPadTemplate) ++out.dropped;
      continue;
    }
    out.members[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  return out;
}

WindowFeatures featurize(const std::vector<ParsedMessage>& window, const SemanticTable& table, int num_components) {
  std::vector<int> ids;
  std::vector<std::int64_t> ts;
  for (const auto& m : window) {
    ids.push_back(m.template_id);
    ts.push_back(m.timestamp);
  }
  auto bundle = build_bundle(ids, ts, table);
  WindowFeatures f;
  f.semantic = std::move(bundle.semantic);
  f.temporal = std::move(bundle.temporal);
  f.subsequences = extract_subsequences(window, num_components);
  for (const auto& rows : f.subsequences.members) {
    std::vector<std::int64_t> sub;
    for (int r : rows) sub.push_back(ts[static_cast<std::size_t>(r)]);
    const auto rel = temporal_features(sub);
    Tensor t(static_cast<Eigen::Index>(rel.size()), 1);
    for (std::size_t i = 0; i < rel.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = rel[i];
    f.subsequence_temporal.push_back(std::move(t));
  }
  return f;
}

std::vector<std::pair<int, int>> ordered_pairs(int num_components) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < num_components; ++i)
    for (int j = 0; j < num_components; ++j)
      if (i != j) out.emplace_back(i, j);
  return out;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.embed_dim;
  const int h = config_.hidden_dim;
  if (config_.semantic_width() > 0) {
    phi_sem = Mlp("phi_sem", {config_.semantic_dim, config_.semantic_width()}, {Activation::tanh});
  }
  if (config_.temporal_width() > 0) {
    phi_time = Mlp("phi_time", {1, config_.temporal_width()}, {Activation::tanh});
  }
  lstm = Lstm("lstm", d, h, config_.lstm_layers);
  phi_edge = Mlp("phi_edge", {2 * h, 2 * h}, {Activation::relu});
  conv = ConvScalar("conv", 2 * h);
  for (int l = 0; l < config_.gcn_layers; ++l) gcn.emplace_back("gcn" + std::to_string(l), h, h);
  u_att = Parameter("u_att", Tensor::Zero(1, h));
  phi_out = Mlp("phi_out", {2 * h, config_.num_templates}, {Activation::identity});
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  auto append = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  if (!phi_sem.layers.empty()) append(phi_sem.parameters());
  if (!phi_time.layers.empty()) append(phi_time.parameters());
  append(lstm.parameters());
  append(phi_edge.parameters());
  out.push_back(&conv.kernel);
  out.push_back(&conv.bias);
  for (auto& g : gcn) out.push_back(&g.weight);
  out.push_back(&u_att);
  append(phi_out.parameters());
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Model::init(Rng& rng) {
  for (auto* p : parameters()) {
    const bool is_bias = p->name.size() >= 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0;
    if (is_bias) {
      p->value.setZero();
    } else {
      xavier_uniform(p->value, rng);
    }
    p->zero_grad();
  }
}

Var Model::embed_rows(Tape& tape, Var semantic_rows, const Tensor& temporal, const DropoutContext* drop) {
  std::vector<Var> parts;
  if (config_.semantic_width() > 0) parts.push_back(semantic_rows);
  if (config_.temporal_width() > 0) parts.push_back(phi_time.apply(tape, tape.constant(temporal), drop));
  return parts.size() == 1 ? parts[0] : ops::concat_cols(parts);
}

Model::Embedded Model::feature_embed(Tape& tape, const WindowFeatures& f, const DropoutContext* drop) {
  if (f.semantic.cols() != config_.semantic_dim) {
    throw ShapeError("feature_embed: semantic width " + std::to_string(f.semantic.cols()) + " vs configured " +
                     std::to_string(config_.semantic_dim));
  }
  Embedded e;
  // The semantic MLP is row-wise, so subsequence rows are gathered from the
  // window's projection.
  Var sem;
  if (config_.semantic_width() > 0) sem = phi_sem.apply(tape, tape.constant(f.semantic), drop);
  e.window = embed_rows(tape, sem, f.temporal, drop);
  for (std::size_t c = 0; c < f.subsequences.members.size(); ++c) {
    const auto& rows = f.subsequences.members[c];
    Var sub_sem;
    if (config_.semantic_width() > 0) {
      sub_sem = ops::gather_rows(sem, std::vector<Eigen::Index>(rows.begin(), rows.end()));
    }
    e.subsequences.push_back(embed_rows(tape, sub_sem, f.subsequence_temporal[c], drop));
  }
  return e;
}

std::pair<Var, Var> Model::encode_all(Tape& tape, const Embedded& e) {
  auto encode = [&](Var x) { return config_.ablation.lstm_off ? ops::mean_rows(x) : lstm.apply(tape, x); };
  Var x_seq = encode(e.window);
  std::vector<Var> rows;
  for (const auto& s : e.subsequences) rows.push_back(encode(s));
  return {x_seq, ops::concat_rows(rows)};
}

Var Model::correlation_weights(Tape& tape, Var x_c) {
  const int n = static_cast<int>(x_c.rows());
  const auto pairs = ordered_pairs(n);
  if (pairs.empty()) return tape.constant(Tensor::Zero(0, 1));
  if (config_.ablation.ic_off) return tape.constant(Tensor::Ones(static_cast<Eigen::Index>(pairs.size()), 1));
  std::vector<Eigen::Index> left, right;
  for (auto [i, j] : pairs) {
    left.push_back(i);
    right.push_back(j);
  }
  Var concat = ops::concat_cols({ops::gather_rows(x_c, left), ops::gather_rows(x_c, right)});
  Var edges = phi_edge.apply(tape, concat);
  return ops::sigmoid(conv.apply_rows(tape, edges));
}

Var Model::propagate(Tape& tape, Var x_c, Var x_rel) {
  const Eigen::Index n = x_c.rows();
  std::vector<Eigen::Index> rows, cols;
  for (auto [i, j] : ordered_pairs(static_cast<int>(n))) {
    rows.push_back(i);
    cols.push_back(j);
  }
  Var adjacency = rows.empty() ? tape.constant(Tensor::Zero(n, n)) : ops::scatter(x_rel, rows, cols, n, n);
  Var normalized = ops::gcn_normalize(adjacency);
  Var x = x_c;
  for (auto& layer : gcn) x = ops::relu(layer.apply(tape, x, normalized));
  return x;
}

Model::Fused Model::fuse(Tape& tape, Var x_m, const AttentionState& state) {
  const Eigen::Index n = x_m.rows();
  Var scores = ops::transpose(ops::matmul(x_m, ops::transpose(tape.parameter(u_att))));
  Fused out;
  out.beta_raw = ops::softmax_rows(scores);
  Eigen::RowVectorXd prev = state.beta.size() == n ? state.beta : AttentionState::uniform(static_cast<int>(n)).beta;
  Tensor prior = config_.gamma * Tensor(prev);
  out.beta = ops::normalize_rows(ops::add(tape.constant(std::move(prior)), ops::scale(out.beta_raw, 1.0 - config_.gamma)));
  out.x_att = ops::matmul(out.beta, x_m);
  return out;
}

Var Model::predict_logits(Tape& tape, Var x_seq, Var x_att, const DropoutContext* drop) {
  Var z = ops::concat_cols({x_seq, x_att});
  if (drop != nullptr) z = dropout(z, drop->rate, drop->rng, drop->training);
  return phi_out.apply(tape, z);
}

Model::Output Model::forward(Tape& tape, const WindowFeatures& f, const AttentionState& state,
                             const DropoutContext* drop) {
  if (static_cast<int>(f.subsequences.members.size()) != config_.num_components) {
    throw ShapeError("forward: window grouped into " + std::to_string(f.subsequences.members.size()) +
                     " components, model has " + std::to_string(config_.num_components));
  }
  auto embedded = feature_embed(tape, f, drop);
  auto [x_seq, x_c] = encode_all(tape, embedded);
  Output out;
  out.x_rel = correlation_weights(tape, x_c);
  Var x_m = propagate(tape, x_c, out.x_rel);
  auto fused = fuse(tape, x_m, state);
  out.beta_raw = fused.beta_raw;
  out.classifier_input = ops::concat_cols({x_seq, fused.x_att});
  out.logits = predict_logits(tape, x_seq, fused.x_att, drop);
  out.probabilities = ops::softmax_rows(out.logits);
  return out;
}

Eigen::RowVectorXd Model::predict(const WindowFeatures& f, const AttentionState& state) {
  Tape tape;
  return forward(tape, f, state).probabilities.value();
}

void Model::update_attention(AttentionState& state, const Eigen::RowVectorXd& mean_beta_raw) const {
  if (state.beta.size() != mean_beta_raw.size()) state = AttentionState::uniform(static_cast<int>(mean_beta_raw.size()));
  Eigen::RowVectorXd b = config_.gamma * state.beta + (1.0 - config_.gamma) * mean_beta_raw;
  state.beta = b / b.sum();
  ++state.iteration;
}

}  // namespace csclog
