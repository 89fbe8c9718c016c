#pragma once

#include "csclog/ingest.hpp"
#include "csclog/parser.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace csclog {

/// Global component set, fixed from the training split. Index order is sorted
/// by name.
class ComponentSet {
 public:
  ComponentSet() = default;
  explicit ComponentSet(std::vector<std::string> names);

  static ComponentSet from_sessions(const std::vector<Session>& sessions);

  /// -1 for names outside the set.
  int lookup(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

/// A message reduced to what the model consumes.
struct ParsedMessage {
  int template_id = kUnseenTemplate;
  int component = -1;  // -1 when outside the component set
  std::int64_t timestamp = 0;
};

struct ParsedSession {
  std::string id;
  Label label = Label::normal;
  std::vector<ParsedMessage> messages;
};

/// Mines templates from every message of `sessions` in order.
TemplateStore mine_templates(const std::vector<Session>& sessions, TemplateStore::Options options = {});

/// Maps sessions through a store and component set. The store is only read.
std::vector<ParsedSession> parse_sessions(const std::vector<Session>& sessions, const TemplateStore& store,
                                          const ComponentSet& components);

/// Line-delimited JSON: {id, label, e:[...], p:[...], t:[...]}.
void write_parsed(std::ostream& out, const std::vector<ParsedSession>& sessions);
std::vector<ParsedSession> read_parsed(std::istream& in);

}  // namespace csclog
