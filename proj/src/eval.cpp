#include "csclog/eval.hpp"

#include "csclog/errors.hpp"
#include "csclog/persist.hpp"

#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace csclog {

namespace {

double ratio(long long num, long long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

nlohmann::ordered_json metrics_json(const Metrics& m, std::uint64_t seed) {
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    per_class.push_back({{"class", c},
                         {"support", pc.support},
                         {"tp", pc.tp},
                         {"fp", pc.fp},
                         {"fn", pc.fn},
                         {"precision", pc.precision},
                         {"recall", pc.recall},
                         {"f1", pc.f1}});
  }
  nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    std::vector<long long> row(static_cast<std::size_t>(m.confusion.cols()));
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row[static_cast<std::size_t>(c)] = m.confusion(r, c);
    confusion.push_back(row);
  }
  return {{"seed", seed},
          {"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"total", m.total},
          {"averaged", m.averaged},
          {"confusion", std::move(confusion)},
          {"per_class", std::move(per_class)}};
}

}  // namespace

Metrics metrics_from_confusion(const Confusion& confusion, std::vector<int> average_over) {
  if (confusion.rows() != confusion.cols()) throw DataError("confusion matrix must be square");
  const auto n = static_cast<int>(confusion.rows());
  if (average_over.empty()) {
    average_over.resize(static_cast<std::size_t>(n));
    std::iota(average_over.begin(), average_over.end(), 0);
  }
  Metrics m;
  m.confusion = confusion;
  m.total = confusion.sum();
  m.accuracy = ratio(confusion.trace(), m.total);
  m.per_class.resize(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    auto& pc = m.per_class[static_cast<std::size_t>(c)];
    pc.tp = confusion(c, c);
    pc.support = confusion.row(c).sum();
    pc.fp = confusion.col(c).sum() - pc.tp;
    pc.fn = pc.support - pc.tp;
    pc.precision = ratio(pc.tp, pc.tp + pc.fp);
    pc.recall = ratio(pc.tp, pc.tp + pc.fn);
    const double pr = pc.precision + pc.recall;
    pc.f1 = pr == 0.0 ? 0.0 : 2.0 * pc.precision * pc.recall / pr;
  }
  for (int c : average_over) {
    if (c < 0 || c >= n) throw DataError("averaged class " + std::to_string(c) + " out of range");
    const auto& pc = m.per_class[static_cast<std::size_t>(c)];
    m.precision += pc.precision;
    m.recall += pc.recall;
    m.f1 += pc.f1;
  }
  const auto count = static_cast<double>(average_over.size());
  m.precision /= count;
  m.recall /= count;
  m.f1 /= count;
  m.averaged = std::move(average_over);
  return m;
}

Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth, int num_classes,
                        std::vector<int> average_over) {
  if (predicted.size() != truth.size()) {
    throw DataError("metrics: " + std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(truth.size()) + " labels");
  }
  if (num_classes < 1) throw DataError("metrics: need at least one class");
  Confusion c = Confusion::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw DataError("metrics: class id out of range at item " + std::to_string(i));
    }
    ++c(truth[i], predicted[i]);
  }
  return metrics_from_confusion(c, std::move(average_over));
}

Metrics evaluate_detection(const std::vector<DetectionVerdict>& verdicts) {
  if (verdicts.empty()) throw DataError("detection evaluation: no verdicts");
  std::vector<int> predicted, truth;
  for (const auto& v : verdicts) {
    predicted.push_back(v.verdict == Label::anomaly ? 1 : 0);
    truth.push_back(v.truth == Label::anomaly ? 1 : 0);
  }
  return compute_metrics(predicted, truth, 2);
}

Metrics evaluate_prediction(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                            const AttentionState& state, int k) {
  const int n = model.config().num_templates;
  if (k < 1 || k > n) throw ConfigError("prediction evaluation: k must be in [1, " + std::to_string(n) + "]");
  std::vector<int> predicted, truth;
  std::set<int> targets;
  for (const auto& s : samples) {
    if (s.target < 0) continue;
    const auto p = model.predict(featurize(s.window, table, model.config().num_components), state);
    const auto top = rank_ties(p, k);
    const bool hit = std::find(top.begin(), top.end(), s.target) != top.end();
    predicted.push_back(hit ? s.target : top.front());
    truth.push_back(s.target);
    targets.insert(s.target);
  }
  if (truth.empty()) throw DataError("prediction evaluation: no samples with a known target");
  return compute_metrics(predicted, truth, n, std::vector<int>(targets.begin(), targets.end()));
}

Summary summarize(const Metrics& m) { return {m.accuracy, m.precision, m.recall, m.f1}; }

ReportRow aggregate(std::string name, std::string task, int k, std::vector<std::uint64_t> seeds,
                    std::vector<Metrics> runs) {
  if (runs.empty()) throw DataError("aggregate: no runs");
  if (seeds.size() != runs.size()) throw DataError("aggregate: seed count does not match run count");
  ReportRow row{std::move(name), std::move(task), k, std::move(seeds), std::move(runs), {}};
  for (const auto& r : row.runs) {
    row.mean.accuracy += r.accuracy;
    row.mean.precision += r.precision;
    row.mean.recall += r.recall;
    row.mean.f1 += r.f1;
  }
  const auto n = static_cast<double>(row.runs.size());
  row.mean.accuracy /= n;
  row.mean.precision /= n;
  row.mean.recall /= n;
  row.mean.f1 /= n;
  return row;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw ConfigError("unknown report format '" + std::string(s) + "' (json, csv, markdown)");
}

std::string extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return ".json";
    case ReportFormat::csv: return ".csv";
    case ReportFormat::markdown: return ".md";
  }
  return "";
}

void emit_report(std::ostream& out, const MetricsReport& report, ReportFormat format) {
  if (report.rows.empty()) throw DataError("report has no rows");
  switch (format) {
    case ReportFormat::json: {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (const auto& r : report.rows) {
        nlohmann::ordered_json runs = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < r.runs.size(); ++i) runs.push_back(metrics_json(r.runs[i], r.seeds[i]));
        rows.push_back({{"name", r.name},
                        {"task", r.task},
                        {"k", r.k},
                        {"seeds", r.seeds},
                        {"mean",
                         {{"accuracy", r.mean.accuracy},
                          {"precision", r.mean.precision},
                          {"recall", r.mean.recall},
                          {"f1", r.mean.f1}}},
                        {"runs", std::move(runs)}});
      }
      nlohmann::ordered_json j = {{"version", kFormatVersion}, {"kind", "report"}, {"rows", std::move(rows)}};
      out << j.dump(2) << '\n';
      break;
    }
    case ReportFormat::csv:
      out << "name,task,k,seeds,accuracy,precision,recall,f1\n";
      for (const auto& r : report.rows) {
        std::string seeds;
        for (auto s : r.seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
        out << r.name << ',' << r.task << ',' << r.k << ',' << seeds << ',' << fixed4(r.mean.accuracy) << ','
            << fixed4(r.mean.precision) << ',' << fixed4(r.mean.recall) << ',' << fixed4(r.mean.f1) << '\n';
      }
      break;
    case ReportFormat::markdown:
      out << "| Model | Task | k | Seeds | Acc. | Pre. | Rec. | F1 |\n"
          << "|---|---|---:|---:|---:|---:|---:|---:|\n";
      for (const auto& r : report.rows) {
        out << "| " << r.name << " | " << r.task << " | " << r.k << " | " << r.seeds.size() << " | "
            << fixed4(r.mean.accuracy) << " | " << fixed4(r.mean.precision) << " | " << fixed4(r.mean.recall)
            << " | " << fixed4(r.mean.f1) << " |\n";
      }
      break;
  }
}

void emit_report(const std::filesystem::path& file, const MetricsReport& report, ReportFormat format) {
  std::ostringstream buf;
  emit_report(buf, report, format);
  try {
    write_file_atomic(file, buf.str());
  } catch (const std::filesystem::filesystem_error& e) {
    throw DataError(std::string("cannot write report: ") + e.what());
  }
}

MetricsReport read_report_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: unreadable: ") + e.what());
  }
  if (j.value("kind", "") != "report" || j.value("version", 0) != kFormatVersion) {
    throw DataError("report: not a version 1 report");
  }
  MetricsReport report;
  try {
    for (const auto& r : j.at("rows")) {
      std::vector<Metrics> runs;
      for (const auto& run : r.at("runs")) {
        const auto rows = run.at("confusion").get<std::vector<std::vector<long long>>>();
        Confusion c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t a = 0; a < rows.size(); ++a) {
          if (rows[a].size() != rows.size()) throw DataError("report: confusion matrix is not square");
          for (std::size_t b = 0; b < rows.size(); ++b) {
            c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = rows[a][b];
          }
        }
        runs.push_back(metrics_from_confusion(c, run.at("averaged").get<std::vector<int>>()));
      }
      report.rows.push_back(aggregate(r.at("name").get<std::string>(), r.at("task").get<std::string>(),
                                      r.at("k").get<int>(), r.at("seeds").get<std::vector<std::uint64_t>>(),
                                      std::move(runs)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: malformed: ") + e.what());
  }
  return report;
}

nlohmann::ordered_json run_manifest(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                                    const std::map<std::string, std::string>& fingerprints) {
  return {{"version", kFormatVersion},
          {"kind", "run_manifest"},
          {"tool_version", kToolVersion},
          {"config", nlohmann::ordered_json::parse(config.dump())},
          {"config_hash", sha256_hex(config.dump())},
          {"seeds", seeds},
          {"fingerprints", fingerprints}};
}

}  // namespace csclog
