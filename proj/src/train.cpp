#include "csclog/train.hpp"

#include "csclog/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace csclog {

namespace {

constexpr int kCheckpointVersion = 1;

struct Snapshot {
  std::vector<Tensor> values;
  AttentionState state;
};

Snapshot take_snapshot(Model& model, const AttentionState& state) {
  Snapshot s;
  for (auto* p : model.parameters()) s.values.push_back(p->value);
  s.state = state;
  return s;
}

void restore(Model& model, AttentionState& state, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
  state = s.state;
}

}  // namespace

std::vector<WindowSample> make_samples(const ParsedSession& session, int window) {
  if (window < 1) throw ConfigError("window size must be >= 1");
  std::vector<WindowSample> out;
  const int n = static_cast<int>(session.messages.size());
  for (int o = 0; o + window <= n - 1; ++o) {
    WindowSample s;
    s.window.assign(session.messages.begin() + o, session.messages.begin() + o + window);
    s.target = session.messages[static_cast<std::size_t>(o + window)].template_id;
    s.session_id = session.id;
    s.offset = o;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WindowSample> make_samples(const std::vector<ParsedSession>& sessions, int window) {
  std::vector<WindowSample> out;
  for (const auto& s : sessions) {
    auto part = make_samples(s, window);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

int TrainConfig::effective_patience() const { return patience >= 0 ? patience : (epochs + 1) / 2; }

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (batch_size < 1) throw ConfigError("train: batch size must be positive");
  if (epochs < 1) throw ConfigError("train: epochs must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
}

Var sample_loss(Model& model, Tape& tape, const WindowSample& sample, const SemanticTable& table,
                const AttentionState& state, const DropoutContext* drop) {
  const auto f = featurize(sample.window, table, model.config().num_components);
  return ops::cross_entropy(model.forward(tape, f, state, drop).probabilities, sample.target);
}

double mean_loss(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                 const AttentionState& state) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.target < 0) continue;
    Tape tape;
    total += sample_loss(model, tape, s, table, state).value()(0, 0);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double topk_accuracy(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                     const AttentionState& state, int k) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (s.target < 0) continue;
    const auto p = model.predict(featurize(s.window, table, model.config().num_components), state);
    const double pt = p(s.target);
    int rank = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p(i) > pt || (p(i) == pt && i < s.target)) ++rank;
    }
    hits += rank < k;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

TrainResult train(Model& model, AttentionState& state, const std::vector<WindowSample>& samples,
                  const std::vector<WindowSample>& validation, const SemanticTable& table, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].target >= 0) usable.push_back(i);
  if (usable.empty()) throw DataError("no training samples (sessions shorter than the window?)");
  if (state.beta.size() != model.config().num_components) state = AttentionState::uniform(model.config().num_components);

  Rng shuffle_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0xD1B54A32D192ED03ULL);
  DropoutContext drop{model.config().dropout, &dropout_rng, true};
  Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  auto params = model.parameters();

  TrainResult result;
  Snapshot best = take_snapshot(model, state);
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < usable.size(); start += batch) {
      const std::size_t end = std::min(start + batch, usable.size());
      for (auto* p : params) p->zero_grad();
      Tape tape;
      std::vector<Var> losses;
      Eigen::RowVectorXd beta_sum = Eigen::RowVectorXd::Zero(model.config().num_components);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[usable[i]];
        const auto f = featurize(s.window, table, model.config().num_components);
        auto out = model.forward(tape, f, state, &drop);
        losses.push_back(ops::cross_entropy(out.probabilities, s.target));
        beta_sum += out.beta_raw.value();
      }
      Var total = losses.size() == 1 ? losses[0] : ops::sum_all(ops::concat_rows(losses));
      Var loss = ops::scale(total, 1.0 / static_cast<double>(losses.size()));
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        restore(model, state, best);
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      try {
        adam.step(params);
      } catch (const NonFiniteError& e) {
        restore(model, state, best);
        throw DivergenceError(std::string("non-finite gradient at epoch ") + std::to_string(epoch) + ": " + e.what());
      }
      model.update_attention(state, beta_sum / static_cast<double>(losses.size()));
      epoch_loss += value * static_cast<double>(losses.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(usable.size());
    rec.val_loss = validation.empty() ? rec.train_loss : mean_loss(model, validation, table, state);
    if (!std::isfinite(rec.val_loss)) {
      restore(model, state, best);
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best = take_snapshot(model, state);
      since_best = 0;
    } else if (++since_best >= config.effective_patience()) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  restore(model, state, best);
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << nlohmann::json(r.train_loss).dump() << ',' << nlohmann::json(r.val_loss).dump() << '\n';
  }
}

void save_checkpoint(std::ostream& out, Model& model, const AttentionState& state, const nlohmann::json& settings,
                     const std::string& store_hash) {
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (auto* p : model.parameters()) {
    tensors.push_back({{"name", p->name},
                       {"shape", {p->value.rows(), p->value.cols()}},
                       {"data", std::vector<double>(p->value.data(), p->value.data() + p->value.size())}});
  }
  nlohmann::ordered_json j = {{"version", kCheckpointVersion},
                      {"kind", "checkpoint"},
                      {"store_hash", store_hash},
                      {"model", nlohmann::ordered_json::parse(to_json(model.config()).dump())},
                      {"settings", nlohmann::ordered_json::parse(settings.dump())},
                      {"attention",
                       {{"beta", std::vector<double>(state.beta.data(), state.beta.data() + state.beta.size())},
                        {"iteration", state.iteration}}},
                      {"tensors", std::move(tensors)}};
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(std::istream& in, const std::optional<std::string>& expected_store_hash) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: unreadable: ") + e.what());
  }
  if (j.value("kind", "") != "checkpoint") throw DataError("checkpoint: wrong file kind");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + j.value("version", nlohmann::json(0)).dump());
  }
  Checkpoint c;
  c.store_hash = j.at("store_hash").get<std::string>();
  if (expected_store_hash && *expected_store_hash != c.store_hash) {
    throw DataError("checkpoint was trained against template store " + c.store_hash + ", not " + *expected_store_hash);
  }
  try {
    c.model = Model(model_config_from_json(j.at("model")));
    c.settings = j.at("settings");
    const auto beta = j.at("attention").at("beta").get<std::vector<double>>();
    c.state.beta = Eigen::Map<const Eigen::RowVectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    c.state.iteration = j.at("attention").at("iteration").get<long long>();
    auto params = c.model.parameters();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != params.size()) throw DataError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != params[i]->name) {
        throw DataError("checkpoint: expected tensor " + params[i]->name);
      }
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      if (rows != params[i]->value.rows() || cols != params[i]->value.cols()) {
        throw DataError("checkpoint: shape mismatch for " + params[i]->name);
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("checkpoint: bad data length");
      std::copy(data.begin(), data.end(), params[i]->value.data());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed: ") + e.what());
  }
  return c;
}

}  // namespace csclog
