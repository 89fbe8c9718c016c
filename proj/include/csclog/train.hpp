#pragma once

#include "csclog/dataset.hpp"
#include "csclog/model.hpp"
#include "csclog/optim.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace csclog {

struct WindowSample {
  std::vector<ParsedMessage> window;
  int target = kUnseenTemplate;
  std::string session_id;
  int offset = 0;
  /// Window was left-padded with kPadTemplate (short-session fallback).
  bool padded = false;
};

/// Step-1 sliding windows: offset o yields messages o..o+n_w-1 with the
/// template of message o+n_w as target.
std::vector<WindowSample> make_samples(const std::vector<ParsedSession>& sessions, int window);
std::vector<WindowSample> make_samples(const ParsedSession& session, int window);

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 16;
  int epochs = 20;
  /// Negative: ceil(epochs / 2).
  int patience = -1;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  int effective_patience() const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Cross-entropy of one sample; `target` must be a known template.
Var sample_loss(Model& model, Tape& tape, const WindowSample& sample, const SemanticTable& table,
                const AttentionState& state, const DropoutContext* drop = nullptr);

/// Mean inference-mode loss. Samples with an unseen target are skipped.
double mean_loss(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                 const AttentionState& state);

/// Share of samples whose target is among the k most probable templates.
double topk_accuracy(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                     const AttentionState& state, int k = 1);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with validation early stopping. On return the model and
/// state hold the best-validation snapshot. A non-finite loss restores that
/// snapshot and throws DivergenceError.
TrainResult train(Model& model, AttentionState& state, const std::vector<WindowSample>& samples,
                  const std::vector<WindowSample>& validation, const SemanticTable& table, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

struct Checkpoint {
  Model model;
  AttentionState state;
  /// Free-form run settings stored alongside the weights.
  nlohmann::json settings;
  std::string store_hash;
};

void save_checkpoint(std::ostream& out, Model& model, const AttentionState& state, const nlohmann::json& settings,
                     const std::string& store_hash);
/// Throws DataError on a version or store-hash mismatch (when `expected_store_hash` is given).
Checkpoint load_checkpoint(std::istream& in, const std::optional<std::string>& expected_store_hash = std::nullopt);

}  // namespace csclog
