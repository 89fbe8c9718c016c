#include "csclog/detect.hpp"

#include "csclog/errors.hpp"
#include "csclog/parallel.hpp"
#include "csclog/persist.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

namespace csclog {

std::vector<int> rank_ties(const Eigen::RowVectorXd& probabilities, int k) {
  const int n = static_cast<int>(probabilities.size());
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  const int take = std::clamp(k, 0, n);
  std::partial_sort(ids.begin(), ids.begin() + take, ids.end(), [&](int a, int b) {
    if (probabilities(a) != probabilities(b)) return probabilities(a) > probabilities(b);
    return a < b;
  });
  ids.resize(static_cast<std::size_t>(take));
  return ids;
}

int classify_window(Model& model, const WindowSample& sample, const SemanticTable& table,
                    const AttentionState& state, int k, std::vector<int>* topk) {
  const int n_event = model.config().num_templates;
  if (k < 1 || k > n_event) {
    throw ConfigError("top-k must be in [1, " + std::to_string(n_event) + "], got " + std::to_string(k));
  }
  const auto p = model.predict(featurize(sample.window, table, model.config().num_components), state);
  auto ranked = rank_ties(p, k);
  const bool hit =
      sample.target >= 0 && std::find(ranked.begin(), ranked.end(), sample.target) != ranked.end();
  if (topk != nullptr) *topk = std::move(ranked);
  return hit ? 0 : 1;
}

void DetectConfig::validate() const {
  if (window < 1) throw ConfigError("detect: window must be >= 1");
  if (k < 1) throw ConfigError("detect: k must be >= 1");
  if (alpha_anom < 1) throw ConfigError("detect: alpha_anom must be >= 1");
  if (jobs < 1) throw ConfigError("detect: jobs must be >= 1");
}

std::vector<WindowSample> detection_windows(const ParsedSession& session, int window) {
  auto out = make_samples(session, window);
  if (!out.empty() || session.messages.empty()) return out;
  const auto n = session.messages.size();
  WindowSample s;
  const ParsedMessage pad{kPadTemplate, -1, session.messages.front().timestamp};
  s.window.assign(static_cast<std::size_t>(window) - (n - 1), pad);
  s.window.insert(s.window.end(), session.messages.begin(), session.messages.end() - 1);
  s.target = session.messages.back().template_id;
  s.session_id = session.id;
  s.offset = 0;
  s.padded = true;
  out.push_back(std::move(s));
  return out;
}

Label threshold_verdict(int anomalous_window_count, int alpha_anom) {
  return anomalous_window_count >= alpha_anom ? Label::anomaly : Label::normal;
}

DetectionVerdict classify_sequence(Model& model, const ParsedSession& session, const SemanticTable& table,
                                   const AttentionState& state, const DetectConfig& config) {
  config.validate();
  DetectionVerdict v;
  v.session_id = session.id;
  v.truth = session.label;
  for (const auto& m : session.messages) v.unknown_components += m.component < 0;
  for (const auto& w : detection_windows(session, config.window)) {
    WindowVerdict wv;
    wv.offset = w.offset;
    wv.target = w.target;
    wv.flag = classify_window(model, w, table, state, config.k, &wv.topk);
    v.anomalous_window_count += wv.flag;
    v.padded = v.padded || w.padded;
    v.windows.push_back(std::move(wv));
  }
  v.verdict = threshold_verdict(v.anomalous_window_count, config.alpha_anom);
  return v;
}

std::vector<DetectionVerdict> detect_all(Model& model, const std::vector<ParsedSession>& sessions,
                                         const SemanticTable& table, const AttentionState& state,
                                         const DetectConfig& config) {
  config.validate();
  std::vector<DetectionVerdict> out(sessions.size());
  parallel_for(sessions.size(), config.jobs,
               [&](std::size_t i) { out[i] = classify_sequence(model, sessions[i], table, state, config); });
  return out;
}

void write_verdicts(std::ostream& out, const std::vector<DetectionVerdict>& verdicts) {
  write_format_header(out, "verdicts");
  for (const auto& v : verdicts) {
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : v.windows) {
      windows.push_back({{"offset", w.offset}, {"y_t", w.flag}, {"true", w.target}, {"topk", w.topk}});
    }
    out << nlohmann::json{{"session_id", v.session_id},
                          {"label", to_string(v.truth)},
                          {"verdict", to_string(v.verdict)},
                          {"count", v.anomalous_window_count},
                          {"padded", v.padded},
                          {"unknown_components", v.unknown_components},
                          {"windows", std::move(windows)}}
               .dump()
        << '\n';
  }
}

std::vector<DetectionVerdict> read_verdicts(std::istream& in) {
  read_format_header(in, "verdicts");
  std::vector<DetectionVerdict> out;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DetectionVerdict v;
      v.session_id = j.at("session_id").get<std::string>();
      v.truth = label_from_string(j.at("label").get<std::string>());
      v.verdict = label_from_string(j.at("verdict").get<std::string>());
      v.anomalous_window_count = j.at("count").get<int>();
      v.padded = j.at("padded").get<bool>();
      v.unknown_components = j.at("unknown_components").get<int>();
      for (const auto& w : j.at("windows")) {
        v.windows.push_back({w.at("offset").get<int>(), w.at("y_t").get<int>(), w.at("true").get<int>(),
                             w.at("topk").get<std::vector<int>>()});
      }
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("verdicts line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace csclog
