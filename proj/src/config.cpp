#include "csclog/config.hpp"

#include "csclog/errors.hpp"
#include "csclog/persist.hpp"
#include "csclog/synth.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>

extern char** environ;

namespace csclog {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- TOML subset

namespace {

class TomlReader {
 public:
  explicit TomlReader(std::string_view text) : s_(text) {}

  json document() {
    json root = json::object();
    std::vector<std::string> table;
    for (;;) {
      skip_blank_lines();
      if (done()) break;
      if (peek() == '[') {
        ++i_;
        if (peek() == '[') fail("arrays of tables are not supported");
        skip_spaces();
        table = key();
        skip_spaces();
        expect(']');
        if (!defined_tables_.insert(join(table)).second) fail("table [" + join(table) + "] defined twice");
        navigate(root, table);
      } else {
        auto path = key();
        skip_spaces();
        expect('=');
        skip_spaces();
        auto v = value();
        auto full = table;
        full.insert(full.end(), path.begin(), path.end());
        const std::string leaf = full.back();
        full.pop_back();
        json& parent = navigate(root, full);
        if (parent.contains(leaf)) fail("key " + leaf + " defined twice");
        parent[leaf] = std::move(v);
      }
      skip_spaces();
      skip_comment();
      if (!done() && peek() != '\n') fail("expected end of line");
    }
    return root;
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;
  std::set<std::string> defined_tables_;

  bool done() const { return i_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[i_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    const auto line = 1 + std::count(s_.begin(), s_.begin() + static_cast<std::ptrdiff_t>(std::min(i_, s_.size())), '\n');
    throw ConfigError("TOML line " + std::to_string(line) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  void skip_spaces() {
    while (peek() == ' ' || peek() == '\t' || peek() == '\r') ++i_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!done() && peek() != '\n') ++i_;
    }
  }

  void skip_blank_lines() {
    for (;;) {
      skip_spaces();
      skip_comment();
      if (peek() != '\n') return;
      ++i_;
    }
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  json& navigate(json& root, const std::vector<std::string>& path) {
    json* node = &root;
    for (const auto& p : path) {
      if (!node->contains(p)) (*node)[p] = json::object();
      node = &(*node)[p];
      if (!node->is_object()) fail(p + " is not a table");
    }
    return *node;
  }

  std::vector<std::string> key() {
    std::vector<std::string> parts;
    for (;;) {
      skip_spaces();
      if (peek() == '"') {
        parts.push_back(basic_string());
      } else {
        const auto start = i_;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') ++i_;
        if (i_ == start) fail("expected a key");
        parts.emplace_back(s_.substr(start, i_ - start));
      }
      skip_spaces();
      if (peek() != '.') return parts;
      ++i_;
    }
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    for (;;) {
      if (done() || peek() == '\n') fail("unterminated string");
      const char c = s_[i_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (done()) fail("unterminated string");
      switch (s_[i_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail("unsupported escape");
      }
    }
  }

  std::string literal_string() {
    expect('\'');
    const auto end = s_.find('\'', i_);
    if (end == std::string_view::npos || s_.substr(i_, end - i_).find('\n') != std::string_view::npos) {
      fail("unterminated string");
    }
    std::string out(s_.substr(i_, end - i_));
    i_ = end + 1;
    return out;
  }

  void skip_array_space() {
    for (;;) {
      skip_spaces();
      skip_comment();
      if (peek() != '\n') return;
      ++i_;
    }
  }

  json value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') {
      ++i_;
      json arr = json::array();
      for (;;) {
        skip_array_space();
        if (peek() == ']') break;
        arr.push_back(value());
        skip_array_space();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        if (peek() != ']') fail("expected ',' or ']'");
      }
      ++i_;
      return arr;
    }
    if (c == '{') {
      ++i_;
      json obj = json::object();
      skip_spaces();
      if (peek() == '}') {
        ++i_;
        return obj;
      }
      for (;;) {
        auto path = key();
        skip_spaces();
        expect('=');
        skip_spaces();
        auto v = value();
        const std::string leaf = path.back();
        path.pop_back();
        json& parent = navigate(obj, path);
        if (parent.contains(leaf)) fail("key " + leaf + " defined twice");
        parent[leaf] = std::move(v);
        skip_spaces();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        expect('}');
        return obj;
      }
    }
    const auto start = i_;
    while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string_view("+-._").find(peek()) != std::string_view::npos)) {
      ++i_;
    }
    std::string token(s_.substr(start, i_ - start));
    if (token == "true") return true;
    if (token == "false") return false;
    token.erase(std::remove(token.begin(), token.end(), '_'), token.end());
    if (token.empty()) fail("expected a value");
    if (token.find_first_of(".eE") == std::string::npos || token.rfind("0x", 0) == 0) {
      std::int64_t v = 0;
      const char* first = token.data() + (token[0] == '+' ? 1 : 0);
      int base = 10;
      if (token.rfind("0x", 0) == 0) {
        first += 2;
        base = 16;
      }
      const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v, base);
      if (ec != std::errc() || ptr != token.data() + token.size()) fail("bad number '" + token + "'");
      return v;
    }
    char* end = nullptr;
    const double d = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) fail("bad number '" + token + "'");
    return d;
  }
};

}  // namespace

json parse_toml(std::string_view text) { return TomlReader(text).document(); }

// ------------------------------------------------------------------ overrides

namespace {

std::vector<std::string> split_path(const std::string& path, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = path.find(sep, start);
    out.push_back(path.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + sep.size();
  }
  for (const auto& p : out) {
    if (p.empty()) throw ConfigError("empty segment in setting path '" + path + "'");
  }
  return out;
}

void set_path(json& doc, const std::vector<std::string>& path, const std::string& raw) {
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) (*node)[path[i]] = json::object();
    node = &(*node)[path[i]];
  }
  (*node)[path.back()] = std::move(value);
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  set_path(doc, split_path(assignment.substr(0, eq), "."), assignment.substr(eq + 1));
}

void apply_env_overrides(json& doc, const std::map<std::string, std::string>& environment) {
  static constexpr std::string_view prefix = "CSCLOG_";
  for (const auto& [name, value] : environment) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string path = name.substr(prefix.size());
    std::transform(path.begin(), path.end(), path.begin(), [](unsigned char c) { return std::tolower(c); });
    set_path(doc, split_path(path, "__"), value);
  }
}

std::map<std::string, std::string> current_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos) out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

// -------------------------------------------------------------------- profiles

const std::vector<std::string>& profile_names() {
  static const std::vector<std::string> names{"hdfs", "bgl", "thunderbird", "openstack"};
  return names;
}

json profile_document(const std::string& name) {
  struct Row {
    const char* format;
    bool by_key;
    int batch;
    double alpha_emb;
    int hidden;
    double dropout;
    int window, alpha_anom, k;
  };
  static const std::map<std::string, Row> rows{
      {"hdfs", {"hdfs", true, 16, 0.8, 512, 0.1, 19, 4, 7}},
      {"bgl", {"bgl", false, 8, 0.5, 256, 0.9, 25, 8, 45}},
      {"thunderbird", {"thunderbird", false, 32, 0.8, 128, 0.5, 11, 1, 29}},
      {"openstack", {"openstack", false, 32, 0.8, 256, 0.1, 9, 4, 3}},
  };
  const auto it = rows.find(name);
  if (it == rows.end()) throw ConfigError("unknown profile '" + name + "' (hdfs, bgl, thunderbird, openstack)");
  const auto& r = it->second;
  return {{"dataset", {{"format", r.format}, {"sessionize", r.by_key ? "by_key" : "time_window"}, {"window_seconds", 10}}},
          {"features", {{"alpha_emb", r.alpha_emb}}},
          {"model", {{"embed_dim", r.hidden}, {"hidden_dim", r.hidden}, {"dropout", r.dropout}}},
          {"train", {{"lr", 1e-4}, {"batch_size", r.batch}, {"epochs", 20}, {"weight_decay", 1e-4}}},
          {"detect", {{"window", r.window}, {"alpha_anom", r.alpha_anom}, {"k", r.k}}}};
}

// ------------------------------------------------------------ strict decoding

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a table");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void integer(const char* key, int& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer()) bad(key, "an integer");
      const auto x = v->get<long long>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) bad(key, "a 32-bit integer");
      out = static_cast<int>(x);
    }
  }
  void integer64(const char* key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) bad(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void integer64(const char* key, std::int64_t& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer()) bad(key, "an integer");
      out = v->get<std::int64_t>();
    }
  }
  void number(const char* key, double& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number()) bad(key, "a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      if (!v->is_boolean()) bad(key, "true or false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) bad(key, "a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void list(const char* key, std::vector<T>& out, bool (json::*check)() const noexcept, const char* what) {
    if (const auto* v = take(key)) {
      if (!v->is_array()) bad(key, std::string("a list of ") + what);
      out.clear();
      for (const auto& e : *v) {
        if (!(e.*check)()) bad(key, std::string("a list of ") + what);
        out.push_back(e.get<T>());
      }
    }
  }
  const json* raw(const char* key) { return take(key); }
  Section child(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key " + (path_.empty() ? k : path_ + "." + k));
    }
  }

  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    throw ConfigError((path_.empty() ? key : path_ + "." + key) + " must be " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;

  std::string where() const { return path_.empty() ? "config" : path_; }
  const json* take(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
};

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
}

const std::set<std::string> kFormats{"synthetic", "hdfs", "bgl", "thunderbird", "openstack", "generic"};

}  // namespace

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  Section top(doc, "");
  top.string("profile", c.profile);
  top.integer("jobs", c.jobs);

  {
    auto d = top.child("dataset");
    d.string("format", c.dataset.format);
    if (const auto* p = d.raw("path")) {
      if (p->is_string()) {
        c.dataset.paths.push_back(resolve(p->get<std::string>(), base_dir));
      } else if (p->is_array()) {
        for (const auto& e : *p) {
          if (!e.is_string()) d.bad("path", "a string or a list of strings");
          c.dataset.paths.push_back(resolve(e.get<std::string>(), base_dir));
        }
      } else {
        d.bad("path", "a string or a list of strings");
      }
    }
    std::vector<std::string> file_labels;
    d.list("file_labels", file_labels, &json::is_string, "strings");
    for (const auto& l : file_labels) {
      if (l.empty()) {
        c.dataset.file_labels.emplace_back();
        continue;
      }
      try {
        c.dataset.file_labels.emplace_back(label_from_string(l));
      } catch (const std::exception&) {
        d.bad("file_labels", "a list of \"normal\", \"anomaly\" or \"\"");
      }
    }
    std::string labels;
    d.string("labels", labels);
    if (!labels.empty()) c.dataset.labels = resolve(labels, base_dir);
    d.string("regex", c.dataset.regex);
    std::string strategy = "by_key";
    d.string("sessionize", strategy);
    std::int64_t width = 10;
    d.integer64("window_seconds", width);
    if (strategy == "by_key") {
      c.dataset.sessionize = SessionizeStrategy::by_key();
    } else if (strategy == "time_window") {
      c.dataset.sessionize = SessionizeStrategy::time_window(width);
    } else {
      d.bad("sessionize", "\"by_key\" or \"time_window\"");
    }
    d.number("max_unparseable", c.dataset.max_unparseable);
    if (const auto* s = d.raw("synthetic")) {
      if (!s->is_object()) d.bad("synthetic", "a table");
      c.dataset.synthetic = *s;
      if (!s->contains("preset") && !s->contains("templates")) c.dataset.synthetic["preset"] = "three_component";
      synthetic_spec_from_json(c.dataset.synthetic);  // rejects unknown keys early
    }
    d.finish();
  }
  {
    auto p = top.child("parser");
    p.integer("depth", c.parser.depth);
    p.number("threshold", c.parser.similarity_threshold);
    p.finish();
  }
  {
    auto f = top.child("features");
    f.number("alpha_emb", c.model.alpha_emb);
    f.string("embedder", c.features.embedder);
    if (c.features.embedder != "hash") c.features.embedder = resolve(c.features.embedder, base_dir).string();
    f.integer("semantic_dim", c.features.semantic_dim);
    f.integer64("embed_seed", c.features.embed_seed);
    f.finish();
  }
  {
    auto m = top.child("model");
    m.integer("embed_dim", c.model.embed_dim);
    m.integer("hidden_dim", c.model.hidden_dim);
    m.number("dropout", c.model.dropout);
    m.number("gamma", c.model.gamma);
    m.integer("lstm_layers", c.model.lstm_layers);
    m.integer("gcn_layers", c.model.gcn_layers);
    m.finish();
  }
  {
    auto t = top.child("train");
    t.number("lr", c.train.lr);
    t.integer("batch_size", c.train.batch_size);
    t.integer("epochs", c.train.epochs);
    t.integer("patience", c.train.patience);
    t.number("weight_decay", c.train.weight_decay);
    if (const auto* s = t.raw("seeds")) {
      if (!s->is_array()) t.bad("seeds", "a list of non-negative integers");
      c.seeds.clear();
      for (const auto& e : *s) {
        if (!e.is_number_integer() || e.get<long long>() < 0) t.bad("seeds", "a list of non-negative integers");
        c.seeds.push_back(e.get<std::uint64_t>());
      }
    }
    t.finish();
  }
  {
    auto d = top.child("detect");
    d.integer("window", c.detect.window);
    d.integer("k", c.detect.k);
    d.integer("alpha_anom", c.detect.alpha_anom);
    d.finish();
  }
  {
    auto a = top.child("ablation");
    a.boolean("ic_off", c.model.ablation.ic_off);
    a.boolean("lstm_off", c.model.ablation.lstm_off);
    a.boolean("sem_off", c.model.ablation.sem_off);
    a.boolean("time_off", c.model.ablation.time_off);
    a.finish();
  }
  {
    auto e = top.child("eval");
    e.list("prediction_k", c.prediction_k, &json::is_number_integer, "integers");
    e.finish();
  }
  {
    auto o = top.child("output");
    std::string dir = c.output_dir.string();
    o.string("dir", dir);
    c.output_dir = dir;
    std::vector<std::string> formats;
    o.list("formats", formats, &json::is_string, "strings");
    if (o.has("formats")) {
      c.formats.clear();
      for (const auto& f : formats) c.formats.push_back(report_format_from_string(f));
    }
    o.finish();
  }
  top.finish();
  c.detect.jobs = c.jobs;
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (!kFormats.count(dataset.format)) {
    throw ConfigError("dataset.format must be one of synthetic, hdfs, bgl, thunderbird, openstack, generic");
  }
  if (dataset.format != "synthetic" && dataset.paths.empty()) throw ConfigError("dataset.path is required");
  if (dataset.format == "generic" && dataset.regex.empty()) throw ConfigError("dataset.regex is required for generic logs");
  if (!dataset.file_labels.empty() && dataset.file_labels.size() != dataset.paths.size()) {
    throw ConfigError("dataset.file_labels must have one entry per dataset.path");
  }
  if (dataset.sessionize.kind == SessionizeStrategy::Kind::time_window && dataset.sessionize.width_seconds <= 0) {
    throw ConfigError("dataset.window_seconds must be positive");
  }
  if (!(dataset.max_unparseable >= 0.0 && dataset.max_unparseable <= 1.0)) {
    throw ConfigError("dataset.max_unparseable must be in [0, 1]");
  }
  if (parser.depth < 3) throw ConfigError("parser.depth must be >= 3");
  if (!(parser.similarity_threshold > 0.0 && parser.similarity_threshold <= 1.0)) {
    throw ConfigError("parser.threshold must be in (0, 1]");
  }
  if (features.semantic_dim < 1) throw ConfigError("features.semantic_dim must be positive");
  auto shape = model;
  shape.num_templates = 1;
  shape.num_components = 1;
  shape.semantic_dim = features.semantic_dim;
  shape.validate();
  train.validate();
  detect.validate();
  if (seeds.empty()) throw ConfigError("train.seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("train.seeds must be distinct");
  }
  for (int k : prediction_k) {
    if (k < 1) throw ConfigError("eval.prediction_k entries must be >= 1");
  }
  if (formats.empty()) throw ConfigError("output.formats must not be empty");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

json to_json(const RunConfig& c) {
  json paths = json::array();
  for (const auto& p : c.dataset.paths) paths.push_back(p.string());
  json file_labels = json::array();
  for (const auto& l : c.dataset.file_labels) file_labels.push_back(l ? to_string(*l) : "");
  json formats = json::array();
  for (auto f : c.formats) formats.push_back(f == ReportFormat::json ? "json" : f == ReportFormat::csv ? "csv" : "markdown");
  const bool by_key = c.dataset.sessionize.kind == SessionizeStrategy::Kind::by_key;
  return {{"profile", c.profile},
          {"jobs", c.jobs},
          {"dataset",
           {{"format", c.dataset.format},
            {"path", paths},
            {"file_labels", file_labels},
            {"labels", c.dataset.labels ? c.dataset.labels->string() : ""},
            {"regex", c.dataset.regex},
            {"sessionize", by_key ? "by_key" : "time_window"},
            {"window_seconds", by_key ? 10 : c.dataset.sessionize.width_seconds},
            {"max_unparseable", c.dataset.max_unparseable},
            {"synthetic", c.dataset.synthetic}}},
          {"parser", {{"depth", c.parser.depth}, {"threshold", c.parser.similarity_threshold}}},
          {"features",
           {{"alpha_emb", c.model.alpha_emb},
            {"embedder", c.features.embedder},
            {"semantic_dim", c.features.semantic_dim},
            {"embed_seed", c.features.embed_seed}}},
          {"model",
           {{"embed_dim", c.model.embed_dim},
            {"hidden_dim", c.model.hidden_dim},
            {"dropout", c.model.dropout},
            {"gamma", c.model.gamma},
            {"lstm_layers", c.model.lstm_layers},
            {"gcn_layers", c.model.gcn_layers}}},
          {"train",
           {{"lr", c.train.lr},
            {"batch_size", c.train.batch_size},
            {"epochs", c.train.epochs},
            {"patience", c.train.patience},
            {"weight_decay", c.train.weight_decay},
            {"seeds", c.seeds}}},
          {"detect", {{"window", c.detect.window}, {"k", c.detect.k}, {"alpha_anom", c.detect.alpha_anom}}},
          {"ablation",
           {{"ic_off", c.model.ablation.ic_off},
            {"lstm_off", c.model.ablation.lstm_off},
            {"sem_off", c.model.ablation.sem_off},
            {"time_off", c.model.ablation.time_off}}},
          {"eval", {{"prediction_k", c.prediction_k}}},
          {"output", {{"dir", c.output_dir.string()}, {"formats", formats}}}};
}

RunConfig load_run_config(const std::optional<fs::path>& file, const std::map<std::string, std::string>& environment,
                          const std::vector<std::string>& sets) {
  json overlay = json::object();
  fs::path base;
  if (file) {
    std::string text;
    try {
      text = read_file(*file);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    const auto ext = file->extension().string();
    if (ext == ".toml") {
      overlay = parse_toml(text);
    } else {
      try {
        overlay = json::parse(text);
      } catch (const json::exception& e) {
        throw ConfigError(file->string() + ": " + e.what());
      }
    }
    if (!overlay.is_object()) throw ConfigError(file->string() + ": top level must be a table");
    base = fs::absolute(*file).parent_path();
  }
  apply_env_overrides(overlay, environment);
  for (const auto& s : sets) apply_override(overlay, s);

  json doc = json::object();
  if (overlay.contains("profile")) {
    if (!overlay["profile"].is_string()) throw ConfigError("profile must be a string");
    const auto name = overlay["profile"].get<std::string>();
    if (!name.empty()) doc = profile_document(name);
  }
  doc.merge_patch(overlay);
  return run_config_from_json(doc, base);
}

}  // namespace csclog
