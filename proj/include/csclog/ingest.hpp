#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csclog {

enum class Label { normal, anomaly };

std::string to_string(Label l);
Label label_from_string(std::string_view s);

/// One log line before template parsing.
struct RawRecord {
  std::int64_t timestamp = 0;  // seconds since epoch, >= 0
  std::string component;       // non-empty
  std::string content;         // non-empty
  std::optional<Label> label;
  std::optional<std::string> session_key;
};

/// A labeled, time-ordered group of log messages.
struct Session {
  std::string id;
  std::vector<RawRecord> messages;
  Label label = Label::normal;

  std::int64_t start() const { return messages.empty() ? 0 : messages.front().timestamp; }
};

enum class LogFormat { hdfs, bgl, thunderbird, openstack, generic };

LogFormat log_format_from_string(std::string_view s);
std::string to_string(LogFormat f);

struct ReadOptions {
  LogFormat format = LogFormat::generic;
  /// Generic format only: named groups timestamp, component, content are
  /// required; label and session are optional.
  std::string regex;
  /// Label attached to every record of the file (OpenStack per-file labels).
  std::optional<Label> file_label;
  /// Abort when more than this share of non-blank lines fails to parse.
  double max_unparseable_fraction = 0.10;
};

struct ReadReport {
  std::vector<RawRecord> records;
  std::size_t lines = 0;
  std::size_t unparseable = 0;
  /// 1-based numbers of the first few unparseable lines.
  std::vector<std::size_t> sample_bad_lines;
};

/// Line parser for one format. Construct once per file; generic formats
/// compile their regex here.
class LineParser {
 public:
  explicit LineParser(const ReadOptions& options);
  ~LineParser();
  LineParser(LineParser&&) noexcept;

  std::optional<RawRecord> parse(std::string_view line) const;

 private:
  struct Impl;
  ReadOptions options_;
  std::unique_ptr<Impl> impl_;
};

/// Parses a log stream. Blank lines are skipped; other failures are counted.
ReadReport read_raw_log(std::istream& in, const ReadOptions& options, const std::string& source_name = "<stream>");
ReadReport read_raw_log(const std::filesystem::path& path, const ReadOptions& options);

/// HDFS block labels from a "BlockId,Label" CSV (Label is Normal or Anomaly).
std::map<std::string, Label> read_hdfs_labels(const std::filesystem::path& path);
/// Sets `label` on every record whose session key appears in `labels`.
void apply_key_labels(std::vector<RawRecord>& records, const std::map<std::string, Label>& labels);

struct SessionizeStrategy {
  enum class Kind { by_key, time_window };
  Kind kind = Kind::by_key;
  std::int64_t width_seconds = 10;

  static SessionizeStrategy by_key() { return {Kind::by_key, 0}; }
  static SessionizeStrategy time_window(std::int64_t width) { return {Kind::time_window, width}; }
};

/// Groups records into sessions ordered by start time (ties: first appearance).
/// Time windows are tumbling and aligned to the earliest timestamp.
std::vector<Session> sessionize(std::vector<RawRecord> records, const SessionizeStrategy& strategy);

struct DatasetSplit {
  std::vector<Session> train;
  std::vector<Session> validation;
  std::vector<Session> test;
};

/// 7:1:2 temporal split; train and validation sizes are floored.
DatasetSplit split_dataset(std::vector<Session> sessions);

std::vector<Session> filter_normal(const std::vector<Session>& sessions);

/// Line-delimited JSON {id, label, messages:[{t, component, content}]}.
void write_sessions(std::ostream& out, const std::vector<Session>& sessions);
std::vector<Session> read_sessions(std::istream& in);

}  // namespace csclog
