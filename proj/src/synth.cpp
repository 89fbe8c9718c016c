#include "csclog/synth.hpp"

#include "csclog/errors.hpp"
#include "csclog/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>
#include <fstream>
#include <random>
#include <set>

namespace csclog {

AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "permute_subsequence") return AnomalyKind::permute_subsequence;
  if (s == "insert_rare_template") return AnomalyKind::insert_rare_template;
  throw ConfigError("unknown anomaly kind '" + s + "'");
}

std::string to_string(AnomalyKind k) {
  return k == AnomalyKind::permute_subsequence ? "permute_subsequence" : "insert_rare_template";
}

void SyntheticSpec::validate() const {
  if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) {
    throw ConfigError("synthetic anomaly rate must be in [0, 1]");
  }
  if (templates.empty() || components.empty()) throw ConfigError("synthetic grammar needs templates and components");
  if (sessions < 0) throw ConfigError("synthetic session count must be >= 0");
  if (min_rounds < 1 || max_rounds < min_rounds) throw ConfigError("synthetic rounds must satisfy 1 <= min <= max");
  std::vector<int> uses(components.size(), 0);
  for (int c : schedule) {
    if (c < 0 || static_cast<std::size_t>(c) >= components.size()) throw ConfigError("schedule names unknown component");
    ++uses[static_cast<std::size_t>(c)];
  }
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (components[c].name.empty()) throw ConfigError("synthetic component without a name");
    if (static_cast<std::size_t>(uses[c]) != components[c].sequence.size()) {
      throw ConfigError("component " + components[c].name + " appears " + std::to_string(uses[c]) +
                        " times in the schedule but has " + std::to_string(components[c].sequence.size()) +
                        " templates");
    }
    for (int t : components[c].sequence) {
      if (t < 0 || static_cast<std::size_t>(t) >= templates.size()) throw ConfigError("sequence names unknown template");
    }
  }
  if (permute_component >= static_cast<int>(components.size())) throw ConfigError("permute_component out of range");
  if (!permutation.empty()) {
    if (permute_component < 0) throw ConfigError("a fixed permutation needs permute_component");
    const auto& seq = components[static_cast<std::size_t>(permute_component)].sequence;
    std::vector<int> sorted = permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != static_cast<int>(i)) throw ConfigError("permutation is not a permutation");
    }
    if (permutation.size() != seq.size()) throw ConfigError("permutation length differs from the subsequence");
  }
  const bool wants_rare = std::find(anomaly_kinds.begin(), anomaly_kinds.end(), AnomalyKind::insert_rare_template) !=
                          anomaly_kinds.end();
  if (anomaly_rate > 0.0 && anomaly_kinds.empty()) throw ConfigError("anomaly rate > 0 but no anomaly kinds");
  if (wants_rare && rare_templates.empty()) throw ConfigError("insert_rare_template needs rare_templates");
}

SyntheticSpec three_component_spec() {
  SyntheticSpec s;
  s.templates = {
      "Selected host <*> for instance <*> after filtering",
      "Successfully synced instances from host <*>",
      "GET request for resource <*> returned status <*>",
      "POST request for resource <*> returned status <*> in <*> seconds",
      "DELETE completed for instance <*>",
  };
  s.components = {
      {"nova.scheduler.host.manager", {0, 1, 0, 1}},
      {"nova.metadata.wsgi.server", {2, 3, 2}},
      {"nova.osapi_compute.wsgi.server", {2, 3, 4}},
  };
  s.schedule = {0, 0, 0, 0, 1, 1, 2, 2, 2, 1};
  s.rare_templates = {"Instance <*> failed to spawn: unexpected hypervisor fault"};
  s.permute_component = 2;
  s.permutation = {1, 2, 0};
  return s;
}

SyntheticSpec hdfs_like_spec() {
  SyntheticSpec s;
  s.templates = {
      "BLOCK* NameSystem.allocateBlock: /user/root/rand/_temporary/_task_<*>/part-<*>. <session>",
      "Receiving block <session> src: /<*> dest: /<*>",
      "PacketResponder <*> for block <session> terminating",
      "Received block <session> of size <*> from /<*>",
      "BLOCK* NameSystem.addStoredBlock: blockMap updated: <*> is added to <session> size <*>",
      "Verification succeeded for <session>",
      "BLOCK* NameSystem.delete: <session> is added to invalidSet of <*>",
      "Deleting block <session> file /mnt/hadoop/dfs/data/current/subdir<*>/<session>",
  };
  s.components = {
      {"dfs.FSNamesystem", {0, 4, 4, 4, 6, 6, 6}},
      {"dfs.DataNode$DataXceiver", {1, 1, 1}},
      {"dfs.DataNode$PacketResponder", {2, 3, 2, 3, 2, 3}},
      {"dfs.DataBlockScanner", {5}},
      {"dfs.FSDataset", {7, 7, 7}},
  };
  s.schedule = {0, 1, 1, 1, 2, 2, 2, 2, 2, 2, 0, 0, 0, 3, 0, 0, 0, 4, 4, 4};
  s.rare_templates = {"Exception in receiveBlock for block <session> java.io.IOException: Connection reset by peer"};
  s.min_rounds = 1;
  s.max_rounds = 2;
  s.session_prefix = "blk_";
  s.anomaly_kinds = {AnomalyKind::permute_subsequence, AnomalyKind::insert_rare_template};
  s.permute_component = 2;
  return s;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  const std::string preset = j.value("preset", "");
  if (preset == "three_component") {
    s = three_component_spec();
  } else if (preset == "hdfs_like") {
    s = hdfs_like_spec();
  } else if (!preset.empty()) {
    throw ConfigError("unknown synthetic preset '" + preset + "'");
  }
  static const std::set<std::string> known = {
      "preset", "templates", "components", "schedule", "rare_templates", "sessions", "min_rounds", "max_rounds",
      "anomaly_rate", "anomaly_kinds", "permute_component", "permutation", "session_prefix", "start_time",
      "session_spacing", "max_gap_seconds", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key dataset.synthetic." + key);
  }
  try {
    if (j.contains("templates")) s.templates = j["templates"].get<std::vector<std::string>>();
    if (j.contains("components")) {
      s.components.clear();
      for (const auto& c : j["components"]) {
        s.components.push_back({c.at("name").get<std::string>(), c.at("sequence").get<std::vector<int>>()});
      }
    }
    if (j.contains("schedule")) s.schedule = j["schedule"].get<std::vector<int>>();
    if (j.contains("rare_templates")) s.rare_templates = j["rare_templates"].get<std::vector<std::string>>();
    s.sessions = j.value("sessions", s.sessions);
    s.min_rounds = j.value("min_rounds", s.min_rounds);
    s.max_rounds = j.value("max_rounds", s.max_rounds);
    s.anomaly_rate = j.value("anomaly_rate", s.anomaly_rate);
    if (j.contains("anomaly_kinds")) {
      s.anomaly_kinds.clear();
      for (const auto& k : j["anomaly_kinds"]) s.anomaly_kinds.push_back(anomaly_kind_from_string(k.get<std::string>()));
    }
    s.permute_component = j.value("permute_component", s.permute_component);
    if (j.contains("permutation")) s.permutation = j["permutation"].get<std::vector<int>>();
    s.session_prefix = j.value("session_prefix", s.session_prefix);
    s.start_time = j.value("start_time", s.start_time);
    s.session_spacing = j.value("session_spacing", s.session_spacing);
    s.max_gap_seconds = j.value("max_gap_seconds", s.max_gap_seconds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset.synthetic: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : s.components) comps.push_back({{"name", c.name}, {"sequence", c.sequence}});
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : s.anomaly_kinds) kinds.push_back(to_string(k));
  return {{"templates", s.templates},
          {"components", comps},
          {"schedule", s.schedule},
          {"rare_templates", s.rare_templates},
          {"sessions", s.sessions},
          {"min_rounds", s.min_rounds},
          {"max_rounds", s.max_rounds},
          {"anomaly_rate", s.anomaly_rate},
          {"anomaly_kinds", kinds},
          {"permute_component", s.permute_component},
          {"permutation", s.permutation},
          {"session_prefix", s.session_prefix},
          {"start_time", s.start_time},
          {"session_spacing", s.session_spacing},
          {"max_gap_seconds", s.max_gap_seconds}};
}

namespace {

std::string random_parameter(Rng& rng) {
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_int_distribution<int> octet(0, 255);
  std::uniform_int_distribution<int> small(1, 99999);
  switch (kind(rng)) {
    case 0: return std::to_string(small(rng));
    case 1: return "10.251." + std::to_string(octet(rng)) + "." + std::to_string(octet(rng));
    case 2: return "10.250." + std::to_string(octet(rng)) + "." + std::to_string(octet(rng)) + ":50010";
    case 3: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "0x%04x", small(rng));
      return buf;
    }
    default: return std::to_string(small(rng) % 100) + "." + std::to_string(small(rng));
  }
}

std::string fill(const std::string& text, const std::string& session_id, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 3, "<*>") == 0) {
      out += random_parameter(rng);
      i += 3;
    } else if (text.compare(i, 9, "<session>") == 0) {
      out += session_id;
      i += 9;
    } else {
      out += text[i++];
    }
  }
  return out;
}

struct Emission {
  int component;
  int template_index;  // >= 0 normal template, < 0 rare template -(i+1)
};

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int n = spec.sessions;
  const int n_anomalous = static_cast<int>(std::floor(spec.anomaly_rate * n + 1e-9));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> anomalous(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_anomalous; ++i) anomalous[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  // Positions in the schedule owned by each component.
  std::vector<std::vector<std::size_t>> slots(spec.components.size());
  for (std::size_t p = 0; p < spec.schedule.size(); ++p) slots[static_cast<std::size_t>(spec.schedule[p])].push_back(p);

  SyntheticCorpus corpus;
  std::uniform_int_distribution<int> rounds_dist(spec.min_rounds, spec.max_rounds);
  std::uniform_int_distribution<int> gap_dist(0, spec.max_gap_seconds);
  for (int s = 0; s < n; ++s) {
    const int rounds = rounds_dist(rng);
    std::vector<Emission> plan;
    for (int r = 0; r < rounds; ++r) {
      std::vector<std::size_t> cursor(spec.components.size(), 0);
      for (int c : spec.schedule) {
        const auto& comp = spec.components[static_cast<std::size_t>(c)];
        plan.push_back({c, comp.sequence[cursor[static_cast<std::size_t>(c)]++]});
      }
    }

    std::optional<AnomalyKind> injected;
    if (anomalous[static_cast<std::size_t>(s)]) {
      std::uniform_int_distribution<std::size_t> pick_kind(0, spec.anomaly_kinds.size() - 1);
      const AnomalyKind kind = spec.anomaly_kinds[pick_kind(rng)];
      injected = kind;
      if (kind == AnomalyKind::permute_subsequence) {
        std::vector<int> candidates;
        for (std::size_t c = 0; c < spec.components.size(); ++c) {
          const auto& seq = spec.components[c].sequence;
          if (std::set<int>(seq.begin(), seq.end()).size() > 1) candidates.push_back(static_cast<int>(c));
        }
        if (candidates.empty()) throw ConfigError("no component has a permutable subsequence");
        int comp = spec.permute_component;
        if (comp < 0) {
          std::uniform_int_distribution<std::size_t> pc(0, candidates.size() - 1);
          comp = candidates[pc(rng)];
        }
        const auto& seq = spec.components[static_cast<std::size_t>(comp)].sequence;
        std::vector<int> perm = spec.permutation;
        if (perm.empty()) {
          perm.resize(seq.size());
          std::iota(perm.begin(), perm.end(), 0);
          auto permuted = [&] {
            for (std::size_t i = 0; i < perm.size(); ++i)
              if (seq[static_cast<std::size_t>(perm[i])] != seq[i]) return true;
            return false;
          };
          do {
            std::shuffle(perm.begin(), perm.end(), rng);
          } while (!permuted());
        }
        std::uniform_int_distribution<int> pick_round(0, rounds - 1);
        const std::size_t base = static_cast<std::size_t>(pick_round(rng)) * spec.schedule.size();
        const auto& owned = slots[static_cast<std::size_t>(comp)];
        for (std::size_t i = 0; i < owned.size(); ++i) {
          plan[base + owned[i]].template_index = seq[static_cast<std::size_t>(perm[i])];
        }
      } else {
        std::uniform_int_distribution<std::size_t> pos(0, plan.size());
        std::uniform_int_distribution<std::size_t> rare(0, spec.rare_templates.size() - 1);
        std::uniform_int_distribution<std::size_t> comp(0, spec.components.size() - 1);
        const auto at = pos(rng);
        plan.insert(plan.begin() + static_cast<std::ptrdiff_t>(at),
                    Emission{static_cast<int>(comp(rng)), -static_cast<int>(rare(rng)) - 1});
      }
    }

    Session session;
    session.id = spec.session_prefix + std::to_string(1000 + s);
    session.label = injected ? Label::anomaly : Label::normal;
    std::int64_t t = spec.start_time + static_cast<std::int64_t>(s) * spec.session_spacing;
    for (const auto& e : plan) {
      const std::string& text = e.template_index >= 0
                                    ? spec.templates[static_cast<std::size_t>(e.template_index)]
                                    : spec.rare_templates[static_cast<std::size_t>(-e.template_index - 1)];
      RawRecord r;
      r.timestamp = t;
      r.component = spec.components[static_cast<std::size_t>(e.component)].name;
      r.content = fill(text, session.id, rng);
      r.label = session.label;
      r.session_key = session.id;
      session.messages.push_back(std::move(r));
      t += gap_dist(rng);
    }
    corpus.sessions.push_back(std::move(session));
    corpus.injected.push_back(injected);
  }
  return corpus;
}

void write_hdfs_log(const std::vector<Session>& sessions, const std::filesystem::path& log_path,
                    const std::filesystem::path& label_path) {
  struct Line {
    std::int64_t t;
    std::size_t order;
    std::string text;
  };
  std::vector<Line> lines;
  std::size_t order = 0;
  for (const auto& s : sessions) {
    if (s.id.rfind("blk_", 0) != 0) throw DataError("HDFS export needs blk_ session ids, got " + s.id);
    for (const auto& m : s.messages) {
      const std::time_t tt = static_cast<std::time_t>(m.timestamp);
      std::tm tm{};
      gmtime_r(&tt, &tm);
      char stamp[32];
      std::strftime(stamp, sizeof stamp, "%y%m%d %H%M%S", &tm);
      lines.push_back({m.timestamp, order++,
                       std::string(stamp) + " " + std::to_string(100 + order % 900) + " INFO " + m.component + ": " +
                           m.content});
    }
  }
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.t < b.t; });
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write " + log_path.string());
  for (const auto& l : lines) log << l.text << '\n';
  std::ofstream labels(label_path);
  if (!labels) throw DataError("cannot write " + label_path.string());
  labels << "BlockId,Label\n";
  for (const auto& s : sessions) labels << s.id << ',' << (s.label == Label::anomaly ? "Anomaly" : "Normal") << '\n';
}

}  // namespace csclog
