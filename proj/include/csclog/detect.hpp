#pragma once

#include "csclog/model.hpp"
#include "csclog/train.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace csclog {

/// Top-k template ids by probability, ties broken by ascending id.
/// Returns min(k, N_event) ids.
std::vector<int> rank_ties(const Eigen::RowVectorXd& probabilities, int k);

/// 0 when the target is among the top-k predictions, else 1. An unseen
/// target always flags. Throws ConfigError unless 1 <= k <= N_event.
int classify_window(Model& model, const WindowSample& sample, const SemanticTable& table,
                    const AttentionState& state, int k, std::vector<int>* topk = nullptr);

struct DetectConfig {
  int window = 10;     // N_w
  int k = 1;           // top-k
  int alpha_anom = 1;  // flagged windows that make a session anomalous
  int jobs = 1;

  void validate() const;
};

struct WindowVerdict {
  int offset = 0;
  int flag = 0;  // y_t
  int target = kUnseenTemplate;
  std::vector<int> topk;
};

struct DetectionVerdict {
  std::string session_id;
  Label truth = Label::normal;
  std::vector<WindowVerdict> windows;
  int anomalous_window_count = 0;
  Label verdict = Label::normal;
  /// The session was shorter than the window and judged on one padded window.
  bool padded = false;
  /// Messages whose component was not seen in training.
  int unknown_components = 0;
};

/// Step-1 windows of a session, or one left-padded window when the session
/// has no more than `window` messages.
std::vector<WindowSample> detection_windows(const ParsedSession& session, int window);

/// Verdict from per-window flags: anomaly iff sum >= alpha_anom.
Label threshold_verdict(int anomalous_window_count, int alpha_anom);

DetectionVerdict classify_sequence(Model& model, const ParsedSession& session, const SemanticTable& table,
                                   const AttentionState& state, const DetectConfig& config);

/// Classifies every session, spreading sessions over `config.jobs` threads.
/// Output order matches input order.
std::vector<DetectionVerdict> detect_all(Model& model, const std::vector<ParsedSession>& sessions,
                                         const SemanticTable& table, const AttentionState& state,
                                         const DetectConfig& config);

/// Line-delimited JSON {session_id, verdict, count, windows:[{offset, y_t, true, topk}], ...}.
void write_verdicts(std::ostream& out, const std::vector<DetectionVerdict>& verdicts);
std::vector<DetectionVerdict> read_verdicts(std::istream& in);

}  // namespace csclog
