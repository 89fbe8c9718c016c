#pragma once

#include "csclog/detect.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace csclog {

/// Rows are true classes, columns predicted classes.
using Confusion = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

struct ClassMetrics {
  long long tp = 0, fp = 0, fn = 0, support = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct Metrics {
  Confusion confusion;
  std::vector<ClassMetrics> per_class;
  /// Classes entering the macro averages.
  std::vector<int> averaged;
  long long total = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
};

/// Per-class P/R/F1 with 0 for any undefined ratio, macro-averaged over
/// `average_over` (every class when empty).
Metrics metrics_from_confusion(const Confusion& confusion, std::vector<int> average_over = {});

/// Throws DataError on a length mismatch or an id outside [0, num_classes).
Metrics compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth, int num_classes,
                        std::vector<int> average_over = {});

/// Binary session-level metrics, class 0 normal and class 1 anomaly.
Metrics evaluate_detection(const std::vector<DetectionVerdict>& verdicts);

/// Next-template prediction: a sample is correct when its target is in the
/// top-k, otherwise it counts as a prediction of the top-1 id. Macro averages
/// run over the templates that occur as targets. Samples with unseen targets
/// are skipped.
Metrics evaluate_prediction(Model& model, const std::vector<WindowSample>& samples, const SemanticTable& table,
                            const AttentionState& state, int k);

struct Summary {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

Summary summarize(const Metrics& m);

struct ReportRow {
  std::string name;  // e.g. "full", "wo_ic"
  std::string task;  // "detection" or "prediction"
  int k = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> runs;  // one per seed
  Summary mean;
};

/// Arithmetic mean over seeds.
ReportRow aggregate(std::string name, std::string task, int k, std::vector<std::uint64_t> seeds,
                    std::vector<Metrics> runs);

struct MetricsReport {
  std::vector<ReportRow> rows;
};

enum class ReportFormat { json, csv, markdown };

ReportFormat report_format_from_string(std::string_view s);
std::string extension(ReportFormat f);

/// Full precision in JSON, 4 decimals in CSV and markdown. DataError on an
/// empty report.
void emit_report(std::ostream& out, const MetricsReport& report, ReportFormat format);
void emit_report(const std::filesystem::path& file, const MetricsReport& report, ReportFormat format);
MetricsReport read_report_json(std::istream& in);

/// Reproducibility record for a run: configuration, seeds and input hashes.
nlohmann::ordered_json run_manifest(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                                    const std::map<std::string, std::string>& fingerprints);

}  // namespace csclog
