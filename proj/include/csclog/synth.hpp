#pragma once

#include "csclog/ingest.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace csclog {

enum class AnomalyKind { permute_subsequence, insert_rare_template };

AnomalyKind anomaly_kind_from_string(const std::string& s);
std::string to_string(AnomalyKind k);

/// Grammar for a desk-scale corpus.
///
/// A session is `rounds` repetitions of one round. In a round, `schedule`
/// lists which component emits next; each component emits its `sequence`
/// of templates in order, so a component appears in the schedule exactly
/// |sequence| times. Template text may contain "<*>" (random digit-bearing
/// parameter) and "<session>" (replaced by the session id).
struct SyntheticSpec {
  struct Component {
    std::string name;
    std::vector<int> sequence;
  };

  std::vector<std::string> templates;
  std::vector<Component> components;
  std::vector<int> schedule;
  /// Templates that only anomalies use.
  std::vector<std::string> rare_templates;

  int sessions = 200;
  int min_rounds = 2;
  int max_rounds = 3;
  double anomaly_rate = 0.0;
  std::vector<AnomalyKind> anomaly_kinds{AnomalyKind::permute_subsequence};
  /// Component whose subsequence gets permuted; -1 picks one at random.
  int permute_component = -1;
  /// Fixed permutation of that component's round subsequence (e.g. {1,2,0}
  /// turns T3,T4,T5 into T4,T5,T3). Empty picks a random non-identity one.
  std::vector<int> permutation;

  std::string session_prefix = "s";
  std::int64_t start_time = 1'600'000'000;
  std::int64_t session_spacing = 600;
  int max_gap_seconds = 2;

  void validate() const;
};

/// Three components, five templates; the normal round merges to
/// T1 T2 T1 T2 T3 T4 T3 T4 T5 T3 and component 2 owns T3 T4 T5.
SyntheticSpec three_component_spec();

/// HDFS-flavoured grammar with block ids embedded in every message.
SyntheticSpec hdfs_like_spec();

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& spec);

struct SyntheticCorpus {
  std::vector<Session> sessions;
  /// Per session: which deviation was injected, if any.
  std::vector<std::optional<AnomalyKind>> injected;
};

/// Deterministic given (spec, seed). Exactly floor(rate * sessions) sessions
/// are anomalous, each carrying one injected deviation.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes sessions as HDFS-format log lines plus an anomaly_label.csv.
/// Session ids are used as block ids and must look like "blk_<digits>".
void write_hdfs_log(const std::vector<Session>& sessions, const std::filesystem::path& log_path,
                    const std::filesystem::path& label_path);

}  // namespace csclog
