#include "csclog/dataset.hpp"

#include "csclog/errors.hpp"
#include "csclog/persist.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

namespace csclog {

ComponentSet::ComponentSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
  for (std::size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = static_cast<int>(i);
}

ComponentSet ComponentSet::from_sessions(const std::vector<Session>& sessions) {
  std::set<std::string> seen;
  for (const auto& s : sessions)
    for (const auto& m : s.messages) seen.insert(m.component);
  return ComponentSet(std::vector<std::string>(seen.begin(), seen.end()));
}

int ComponentSet::lookup(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

TemplateStore mine_templates(const std::vector<Session>& sessions, TemplateStore::Options options) {
  TemplateStore store(options);
  for (const auto& s : sessions)
    for (const auto& m : s.messages) store.parse(m.content);
  return store;
}

std::vector<ParsedSession> parse_sessions(const std::vector<Session>& sessions, const TemplateStore& store,
                                          const ComponentSet& components) {
  std::vector<ParsedSession> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    ParsedSession p{s.id, s.label, {}};
    p.messages.reserve(s.messages.size());
    for (const auto& m : s.messages) {
      p.messages.push_back({store.match(m.content).template_id, components.lookup(m.component), m.timestamp});
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_parsed(std::ostream& out, const std::vector<ParsedSession>& sessions) {
  write_format_header(out, "parsed");
  for (const auto& s : sessions) {
    nlohmann::json e = nlohmann::json::array(), p = nlohmann::json::array(), t = nlohmann::json::array();
    for (const auto& m : s.messages) {
      e.push_back(m.template_id);
      p.push_back(m.component);
      t.push_back(m.timestamp);
    }
    out << nlohmann::json{{"id", s.id}, {"label", to_string(s.label)}, {"e", e}, {"p", p}, {"t", t}}.dump() << '\n';
  }
}

std::vector<ParsedSession> read_parsed(std::istream& in) {
  read_format_header(in, "parsed");
  std::vector<ParsedSession> out;
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ParsedSession s;
      s.id = j.at("id").get<std::string>();
      s.label = label_from_string(j.at("label").get<std::string>());
      const auto& e = j.at("e");
      const auto& p = j.at("p");
      const auto& t = j.at("t");
      if (e.size() != p.size() || e.size() != t.size()) throw DataError("column lengths differ");
      for (std::size_t i = 0; i < e.size(); ++i) {
        s.messages.push_back({e[i].get<int>(), p[i].get<int>(), t[i].get<std::int64_t>()});
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("parsed sessions line " + std::to_string(number) + ": " + ex.what());
    } catch (const DataError& ex) {
      throw DataError("parsed sessions line " + std::to_string(number) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace csclog
