#include "csclog/ingest.hpp"

#include "csclog/errors.hpp"
#include "csclog/persist.hpp"

#include <boost/regex.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace csclog {

std::string to_string(Label l) { return l == Label::anomaly ? "anomaly" : "normal"; }

Label label_from_string(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v.empty() || v == "-" || v == "normal" || v == "0" || v == "false") return Label::normal;
  if (v == "anomaly" || v == "abnormal" || v == "1" || v == "true") return Label::anomaly;
  // BGL and Thunderbird mark alerts with a category tag instead of "-".
  return Label::anomaly;
}

LogFormat log_format_from_string(std::string_view s) {
  if (s == "hdfs") return LogFormat::hdfs;
  if (s == "bgl") return LogFormat::bgl;
  if (s == "thunderbird") return LogFormat::thunderbird;
  if (s == "openstack") return LogFormat::openstack;
  if (s == "generic") return LogFormat::generic;
  throw ConfigError("unknown log format '" + std::string(s) + "'");
}

std::string to_string(LogFormat f) {
  switch (f) {
    case LogFormat::hdfs: return "hdfs";
    case LogFormat::bgl: return "bgl";
    case LogFormat::thunderbird: return "thunderbird";
    case LogFormat::openstack: return "openstack";
    case LogFormat::generic: return "generic";
  }
  return "generic";
}

namespace {

// First `n` whitespace-separated fields and the untouched remainder.
bool split_fields(std::string_view line, std::size_t n, std::vector<std::string_view>& fields,
                  std::string_view& rest) {
  fields.clear();
  std::size_t i = 0;
  while (fields.size() < n) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) return false;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    fields.push_back(line.substr(start, i - start));
  }
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  rest = line.substr(i);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
  return true;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> epoch_seconds(int y, int mo, int d, int h, int mi, int s) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

// "YYYY-MM-DD HH:MM:SS[.fff]" or "YYYY-MM-DDTHH:MM:SS", fraction truncated.
std::optional<std::int64_t> parse_datetime(std::string_view s) {
  int y, mo, d, h, mi, sec;
  char sep;
  std::string buf(s);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &sec) != 7) {
    return std::nullopt;
  }
  if (sep != ' ' && sep != 'T' && sep != '_') return std::nullopt;
  return epoch_seconds(y, mo, d, h, mi, sec);
}

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  if (auto v = parse_int(s)) return v;
  return parse_datetime(s);
}

std::optional<std::string> find_block_id(std::string_view content) {
  std::size_t pos = 0;
  while ((pos = content.find("blk_", pos)) != std::string_view::npos) {
    std::size_t end = pos + 4;
    if (end < content.size() && content[end] == '-') ++end;
    const std::size_t digits_start = end;
    while (end < content.size() && std::isdigit(static_cast<unsigned char>(content[end]))) ++end;
    if (end > digits_start) return std::string(content.substr(pos, end - pos));
    pos += 4;
  }
  return std::nullopt;
}

bool valid(const RawRecord& r) { return r.timestamp >= 0 && !r.component.empty() && !r.content.empty(); }

std::optional<RawRecord> parse_hdfs(std::string_view line) {
  // 081109 203615 148 INFO dfs.DataNode$PacketResponder: PacketResponder 1 for block blk_38 terminating
  std::vector<std::string_view> f;
  std::string_view rest;
  if (!split_fields(line, 5, f, rest)) return std::nullopt;
  if (f[0].size() != 6 || f[1].size() != 6) return std::nullopt;
  auto date = parse_int(f[0]);
  auto time = parse_int(f[1]);
  if (!date || !time) return std::nullopt;
  auto ts = epoch_seconds(2000 + static_cast<int>(*date / 10000), static_cast<int>(*date / 100 % 100),
                          static_cast<int>(*date % 100), static_cast<int>(*time / 10000),
                          static_cast<int>(*time / 100 % 100), static_cast<int>(*time % 100));
  if (!ts) return std::nullopt;
  RawRecord r;
  r.timestamp = *ts;
  std::string_view comp = f[4];
  if (!comp.empty() && comp.back() == ':') comp.remove_suffix(1);
  r.component = std::string(comp);
  r.content = std::string(rest);
  r.session_key = find_block_id(rest);
  return r;
}

std::optional<RawRecord> parse_bgl(std::string_view line) {
  // - 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.675872 R02-M1-N0-C:J12-U11 RAS KERNEL INFO msg
  std::vector<std::string_view> f;
  std::string_view rest;
  if (!split_fields(line, 9, f, rest)) return std::nullopt;
  auto ts = parse_int(f[1]);
  if (!ts) return std::nullopt;
  RawRecord r;
  r.timestamp = *ts;
  r.label = label_from_string(f[0]);
  r.component = std::string(f[7]);
  r.content = std::string(rest);
  return r;
}

std::optional<RawRecord> parse_thunderbird(std::string_view line) {
  // - 1131566461 2005.11.09 dn228 Nov 9 12:01:01 dn228/dn228 crond(pam_unix)[2915]: session closed
  std::vector<std::string_view> f;
  std::string_view rest;
  if (!split_fields(line, 8, f, rest)) return std::nullopt;
  auto ts = parse_int(f[1]);
  if (!ts) return std::nullopt;
  RawRecord r;
  r.timestamp = *ts;
  r.label = label_from_string(f[0]);
  const std::size_t space = rest.find(' ');
  const std::size_t colon = rest.find(':');
  std::string_view comp;
  std::string_view content;
  if (colon != std::string_view::npos && (space == std::string_view::npos || colon < space)) {
    comp = rest.substr(0, colon);
    content = rest.substr(colon + 1);
  } else if (space != std::string_view::npos) {
    comp = rest.substr(0, space);
    content = rest.substr(space + 1);
  } else {
    return std::nullopt;
  }
  if (const auto bracket = comp.find('['); bracket != std::string_view::npos) comp = comp.substr(0, bracket);
  while (!content.empty() && std::isspace(static_cast<unsigned char>(content.front()))) content.remove_prefix(1);
  r.component = std::string(comp);
  r.content = std::string(content);
  return r;
}

std::optional<RawRecord> parse_openstack(std::string_view line) {
  // nova-api.log.1.2017-05-16_13:53:08 2017-05-16 00:00:00.008 25746 INFO nova.osapi_compute.wsgi.server [req-...] msg
  std::vector<std::string_view> f;
  std::string_view rest;
  if (!split_fields(line, 6, f, rest)) return std::nullopt;
  auto ts = parse_datetime(std::string(f[1]) + " " + std::string(f[2]));
  if (!ts) return std::nullopt;
  if (!rest.empty() && rest.front() == '[') {
    const auto close = rest.find(']');
    if (close != std::string_view::npos) rest = rest.substr(close + 1);
    while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  }
  RawRecord r;
  r.timestamp = *ts;
  r.component = std::string(f[5]);
  r.content = std::string(rest);
  return r;
}

bool has_group(const std::string& pattern, const std::string& name) {
  return pattern.find("(?<" + name + ">") != std::string::npos ||
         pattern.find("(?P<" + name + ">") != std::string::npos;
}

}  // namespace

struct LineParser::Impl {
  boost::regex regex;
  bool has_label = false;
  bool has_session = false;
};

LineParser::LineParser(const ReadOptions& options) : options_(options), impl_(std::make_unique<Impl>()) {
  if (options_.format != LogFormat::generic) return;
  for (const char* g : {"timestamp", "component", "content"}) {
    if (!has_group(options_.regex, g)) {
      throw ConfigError(std::string("generic log regex lacks required named group '") + g + "'");
    }
  }
  try {
    impl_->regex = boost::regex(options_.regex, boost::regex::perl);
  } catch (const boost::regex_error& e) {
    throw ConfigError(std::string("invalid generic log regex: ") + e.what());
  }
  impl_->has_label = has_group(options_.regex, "label");
  impl_->has_session = has_group(options_.regex, "session");
}

LineParser::~LineParser() = default;
LineParser::LineParser(LineParser&&) noexcept = default;

std::optional<RawRecord> LineParser::parse(std::string_view line) const {
  std::optional<RawRecord> r;
  switch (options_.format) {
    case LogFormat::hdfs: r = parse_hdfs(line); break;
    case LogFormat::bgl: r = parse_bgl(line); break;
    case LogFormat::thunderbird: r = parse_thunderbird(line); break;
    case LogFormat::openstack: r = parse_openstack(line); break;
    case LogFormat::generic: {
      boost::match_results<std::string_view::const_iterator> m;
      if (!boost::regex_match(line.begin(), line.end(), m, impl_->regex)) return std::nullopt;
      auto ts = parse_timestamp(std::string(m["timestamp"].first, m["timestamp"].second));
      if (!ts) return std::nullopt;
      RawRecord rec;
      rec.timestamp = *ts;
      rec.component = std::string(m["component"].first, m["component"].second);
      rec.content = std::string(m["content"].first, m["content"].second);
      if (impl_->has_label && m["label"].matched) {
        rec.label = label_from_string(std::string(m["label"].first, m["label"].second));
      }
      if (impl_->has_session && m["session"].matched && m["session"].length() > 0) {
        rec.session_key = std::string(m["session"].first, m["session"].second);
      }
      r = std::move(rec);
      break;
    }
  }
  if (!r || !valid(*r)) return std::nullopt;
  if (options_.file_label) r->label = *options_.file_label;
  return r;
}

ReadReport read_raw_log(std::istream& in, const ReadOptions& options, const std::string& source_name) {
  LineParser parser(options);
  ReadReport report;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; })) continue;
    ++report.lines;
    if (auto rec = parser.parse(line)) {
      report.records.push_back(std::move(*rec));
    } else {
      ++report.unparseable;
      if (report.sample_bad_lines.size() < 5) report.sample_bad_lines.push_back(number);
    }
  }
  if (report.lines > 0 &&
      static_cast<double>(report.unparseable) > options.max_unparseable_fraction * static_cast<double>(report.lines)) {
    std::ostringstream msg;
    msg << source_name << ": " << report.unparseable << " of " << report.lines << " lines unparseable as "
        << to_string(options.format) << " (first bad lines:";
    for (auto n : report.sample_bad_lines) msg << ' ' << n;
    msg << ")";
    throw DataError(msg.str());
  }
  return report;
}

ReadReport read_raw_log(const std::filesystem::path& path, const ReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open log file " + path.string());
  return read_raw_log(in, options, path.string());
}

std::map<std::string, Label> read_hdfs_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file " + path.string());
  std::map<std::string, Label> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    if (key == "BlockId") continue;
    out[key] = label_from_string(line.substr(comma + 1));
  }
  return out;
}

void apply_key_labels(std::vector<RawRecord>& records, const std::map<std::string, Label>& labels) {
  for (auto& r : records) {
    if (!r.session_key) continue;
    if (auto it = labels.find(*r.session_key); it != labels.end()) r.label = it->second;
  }
}

std::vector<Session> sessionize(std::vector<RawRecord> records, const SessionizeStrategy& strategy) {
  std::vector<Session> sessions;
  if (records.empty()) return sessions;

  if (strategy.kind == SessionizeStrategy::Kind::by_key) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!records[i].session_key) {
        throw DataError("by_key sessionization: record " + std::to_string(i) + " has no session key");
      }
    }
    for (auto& r : records) {
      auto [it, inserted] = index.emplace(*r.session_key, sessions.size());
      if (inserted) sessions.push_back(Session{*r.session_key, {}, Label::normal});
      sessions[it->second].messages.push_back(std::move(r));
    }
    for (auto& s : sessions) {
      std::stable_sort(s.messages.begin(), s.messages.end(),
                       [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
    }
  } else {
    if (strategy.width_seconds <= 0) throw ConfigError("time window width must be > 0");
    std::stable_sort(records.begin(), records.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
    const std::int64_t origin = records.front().timestamp;
    std::int64_t current = -1;
    for (auto& r : records) {
      const std::int64_t bucket = (r.timestamp - origin) / strategy.width_seconds;
      if (bucket != current) {
        sessions.push_back(Session{"w" + std::to_string(bucket), {}, Label::normal});
        current = bucket;
      }
      sessions.back().messages.push_back(std::move(r));
    }
  }

  for (auto& s : sessions) {
    s.label = std::any_of(s.messages.begin(), s.messages.end(),
                          [](const RawRecord& r) { return r.label == Label::anomaly; })
                  ? Label::anomaly
                  : Label::normal;
  }
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const Session& a, const Session& b) { return a.start() < b.start(); });
  return sessions;
}

DatasetSplit split_dataset(std::vector<Session> sessions) {
  if (sessions.size() < 10) {
    throw DataError("dataset split needs at least 10 sessions, got " + std::to_string(sessions.size()));
  }
  for (std::size_t i = 1; i < sessions.size(); ++i) {
    if (sessions[i].start() < sessions[i - 1].start()) throw DataError("dataset split: sessions not in time order");
  }
  const std::size_t n = sessions.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  DatasetSplit out;
  auto first = std::make_move_iterator(sessions.begin());
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(first + static_cast<std::ptrdiff_t>(n_train),
                        first + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(sessions.end()));
  return out;
}

std::vector<Session> filter_normal(const std::vector<Session>& sessions) {
  std::vector<Session> out;
  std::copy_if(sessions.begin(), sessions.end(), std::back_inserter(out),
               [](const Session& s) { return s.label == Label::normal; });
  if (out.empty()) throw DataError("no normal sessions to train on");
  return out;
}

void write_sessions(std::ostream& out, const std::vector<Session>& sessions) {
  write_format_header(out, "sessions");
  for (const auto& s : sessions) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : s.messages) {
      msgs.push_back({{"t", m.timestamp}, {"component", m.component}, {"content", m.content}});
    }
    out << nlohmann::json{{"id", s.id}, {"label", to_string(s.label)}, {"messages", std::move(msgs)}}.dump()
        << '\n';
  }
}

std::vector<Session> read_sessions(std::istream& in) {
  read_format_header(in, "sessions");
  std::vector<Session> out;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Session s;
      s.id = j.at("id").get<std::string>();
      s.label = label_from_string(j.at("label").get<std::string>());
      for (const auto& m : j.at("messages")) {
        RawRecord r;
        r.timestamp = m.at("t").get<std::int64_t>();
        r.component = m.at("component").get<std::string>();
        r.content = m.at("content").get<std::string>();
        r.label = s.label;
        r.session_key = s.id;
        s.messages.push_back(std::move(r));
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("sessions line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace csclog
