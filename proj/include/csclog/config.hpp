#pragma once

#include "csclog/detect.hpp"
#include "csclog/eval.hpp"
#include "csclog/ingest.hpp"
#include "csclog/model.hpp"
#include "csclog/parser.hpp"
#include "csclog/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csclog {

struct DatasetConfig {
  /// hdfs, bgl, thunderbird, openstack, generic or synthetic.
  std::string format = "synthetic";
  std::vector<std::filesystem::path> paths;
  /// Per path, for formats that label whole files (OpenStack).
  std::vector<std::optional<Label>> file_labels;
  /// HDFS "BlockId,Label" CSV.
  std::optional<std::filesystem::path> labels;
  std::string regex;
  SessionizeStrategy sessionize = SessionizeStrategy::by_key();
  double max_unparseable = 0.10;
  /// generate_synthetic input when format == synthetic ({preset, seed, ...}).
  nlohmann::json synthetic = {{"preset", "three_component"}};
};

struct FeatureConfig {
  /// "hash" or a path to a word-vector file.
  std::string embedder = "hash";
  int semantic_dim = 768;
  std::uint64_t embed_seed = 0;
};

struct RunConfig {
  std::string profile;
  DatasetConfig dataset;
  TemplateStore::Options parser;
  FeatureConfig features;
  /// num_templates, num_components and semantic_dim are filled at run time;
  /// alpha_emb lives here but is set from the [features] table.
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  DetectConfig detect;
  std::vector<int> prediction_k{1, 3, 5};
  std::filesystem::path output_dir = "csclog-out";
  std::vector<ReportFormat> formats{ReportFormat::json, ReportFormat::csv, ReportFormat::markdown};
  int jobs = 1;

  void validate() const;
};

/// Known profile names: hdfs, bgl, thunderbird, openstack.
const std::vector<std::string>& profile_names();
/// Settings a profile contributes, in config-document form.
nlohmann::json profile_document(const std::string& name);

/// Parses the TOML subset used by run configs: [dotted.tables], key = value,
/// strings, integers, floats, booleans, inline arrays and # comments.
nlohmann::json parse_toml(std::string_view text);

/// `a.b.c=value` -> document fragment. The value is read as JSON when it
/// parses, else as a plain string.
void apply_override(nlohmann::json& doc, const std::string& assignment);
/// CSCLOG_TRAIN__LR=0.001 style variables, `__` separating path segments.
void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& environment);
std::map<std::string, std::string> current_environment();

/// Strict conversion; unknown keys and bad values raise ConfigError.
/// Relative dataset paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Canonical document of every setting (profile already applied).
nlohmann::json to_json(const RunConfig& c);

/// file (JSON or TOML by extension) < environment < `sets`, layered over the
/// profile named anywhere in those sources.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::map<std::string, std::string>& environment,
                          const std::vector<std::string>& sets);

}  // namespace csclog
