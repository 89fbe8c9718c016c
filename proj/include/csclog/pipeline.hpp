#pragma once

#include "csclog/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace csclog {

/// Pipeline order.
const std::vector<std::string>& stage_names();

struct RunOptions {
  /// Subset of stage_names(); empty runs all of them.
  std::vector<std::string> stages;
  /// Re-run stages whose artifacts are current.
  bool force = false;
  /// Progress lines; nullptr for silence.
  std::ostream* log = nullptr;
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;
};

/// Runs the requested stages in pipeline order inside config.output_dir.
/// A stage is skipped when its manifest, inputs and outputs are all current.
/// Errors keep their type (ConfigError, DataError, DivergenceError) and gain
/// a "[stage]" prefix.
std::vector<StageOutcome> run_pipeline(const RunConfig& config, const RunOptions& options);

/// Hash of the settings a stage's outputs depend on. Excludes the output
/// directory and the worker count.
std::string stage_config_hash(const RunConfig& config, const std::string& stage);

/// Trains and evaluates each variant ("wo_ic", "w/o LSTM", ...) next to the
/// base run, reusing its ingest and parse artifacts, and writes
/// ablation.{json,csv,md} in the base output directory. The first row is the
/// base run's own detection row.
MetricsReport run_ablation(const RunConfig& config, const std::vector<std::string>& variants,
                           const RunOptions& options);

namespace artifact {
std::string sessions(const std::string& split);  // train, validation, test
std::string parsed(const std::string& split);
inline constexpr const char* templates = "templates.jsonl";
inline constexpr const char* components = "components.json";
std::string checkpoint(std::uint64_t seed);
std::string history(std::uint64_t seed);
std::string verdicts(std::uint64_t seed);
std::string report(ReportFormat f);
inline constexpr const char* run_manifest = "run_manifest.json";
}  // namespace artifact

}  // namespace csclog
