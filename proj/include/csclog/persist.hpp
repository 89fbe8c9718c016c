#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace csclog {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kToolVersion = "0.1.0";

/// First line of every line-delimited artifact: {"version":1,"kind":...}.
void write_format_header(std::ostream& out, std::string_view kind);
/// Consumes and checks the header line; DataError on a wrong kind or version.
void read_format_header(std::istream& in, std::string_view kind);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
/// Content hash of a file. DataError if it cannot be read.
std::string fingerprint(const std::filesystem::path& file);

/// Writes via a sibling temporary file and a rename, so readers never see a
/// half-written artifact.
void write_file_atomic(const std::filesystem::path& file, std::string_view content);
std::string read_file(const std::filesystem::path& file);

/// What one pipeline stage consumed and produced. Paths are relative to the
/// output directory.
struct ArtifactManifest {
  std::string stage;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string config_hash;
  std::string tool_version{kToolVersion};
};

nlohmann::ordered_json to_json(const ArtifactManifest& m);
ArtifactManifest manifest_from_json(const nlohmann::json& j);

std::filesystem::path manifest_path(const std::filesystem::path& dir, std::string_view stage);
/// Hashes the named files under `dir` and writes `<stage>.manifest.json`.
ArtifactManifest record_stage(const std::filesystem::path& dir, std::string_view stage,
                              const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                              const std::string& config_hash);
ArtifactManifest read_manifest(const std::filesystem::path& dir, std::string_view stage);

/// True when the stage manifest exists and every recorded input and output
/// still hashes to its recorded value.
bool stage_is_current(const std::filesystem::path& dir, std::string_view stage, const std::string& config_hash);

struct ChainIssue {
  enum class Kind { missing, modified, stale, untracked };
  std::string stage;  // empty for untracked files
  std::string artifact;
  Kind kind;
};

std::string to_string(ChainIssue::Kind k);

struct ChainReport {
  std::vector<std::string> stages;  // manifests found, in file-name order
  std::vector<ChainIssue> issues;

  bool valid() const { return issues.empty(); }
};

/// Walks every manifest in `dir`:
///  - a recorded output that no longer hashes the same is `modified`;
///  - a recorded input that changed since the stage ran makes the stage `stale`;
///  - an artifact file no manifest accounts for is `untracked`.
/// An empty directory gives an empty, valid report. DataError if `dir` is
/// not a directory.
ChainReport verify_chain(const std::filesystem::path& dir);

}  // namespace csclog
